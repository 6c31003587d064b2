//! Per-plan metrics, aggregates, goal distributions and KLD time series.

use glean_core::dataset::{distance, Label, Point, TaskGeometry, Trajectory};
use glean_core::planner::PlanResult;
use glean_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Root mean squared error over every timestep and dimension.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch {
            op: "rmse",
            expected: b.len(),
            got: a.len(),
        });
    }
    let se: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((se / a.len() as f64).sqrt())
}

pub fn endpoint(flat: &[f64]) -> Point {
    let n = flat.len();
    [flat[n - 2], flat[n - 1]]
}

/// Name of the goal region holding `p`, or `"neither"`.
pub fn region_name(geometry: &TaskGeometry, p: Point) -> &'static str {
    geometry.classify(p).map_or("neither", Label::name)
}

/// One evaluated item: a plan, a rollout, or a training sequence. Fields a
/// stage does not measure are left out.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub goal_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kld_pq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub success: Option<bool>,
    /// Goal region holding the final position: left, right or neither.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub region: Option<String>,
}

/// Scores a planned trajectory against its ground truth. `goal` is the
/// requested goal; success means the endpoint lies within the goal radius
/// of it, boundary included.
pub fn plan_metrics(
    id: String,
    plan: &[f64],
    truth: &[f64],
    goal: Point,
    kld_pq: Option<f64>,
    geometry: &TaskGeometry,
) -> Result<Metrics> {
    let end = endpoint(plan);
    let gd = distance(end, goal);
    Ok(Metrics {
        id,
        rmse: Some(rmse(plan, truth)?),
        goal_deviation: Some(gd),
        kld_pq,
        success: Some(gd <= geometry.goal_radius),
        region: Some(region_name(geometry, end).to_string()),
    })
}

/// Pairs plans with ground truths; the goal of each pair is the truth's
/// final position.
pub fn evaluate_plans(plans: &[PlanResult], truths: &[Trajectory], geometry: &TaskGeometry) -> Result<Vec<Metrics>> {
    if plans.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            op: "evaluate_plans pairs",
            expected: truths.len(),
            got: plans.len(),
        });
    }
    plans
        .iter()
        .zip(truths)
        .enumerate()
        .map(|(i, (p, t))| {
            plan_metrics(
                format!("{i}"),
                &p.trajectory,
                &t.flat(),
                t.end(),
                Some(p.report.kld_pq),
                geometry,
            )
        })
        .collect()
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rmse: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub goal_deviation: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kld_pq: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub success_rate: Option<f64>,
}

impl Aggregate {
    /// Fields are aggregated only when every item carries them.
    pub fn of(items: &[Metrics]) -> Self {
        fn all<T: Copy>(items: &[Metrics], f: impl Fn(&Metrics) -> Option<T>) -> Option<Vec<T>> {
            items.iter().map(f).collect()
        }
        let stat = |f: fn(&Metrics) -> Option<f64>| all(items, f).and_then(|v| Stat::of(&v));
        Self {
            n: items.len(),
            rmse: stat(|m| m.rmse),
            goal_deviation: stat(|m| m.goal_deviation),
            kld_pq: stat(|m| m.kld_pq),
            success_rate: all(items, |m| m.success)
                .filter(|v| !v.is_empty())
                .map(|v| 100.0 * v.iter().filter(|s| **s).count() as f64 / v.len() as f64),
        }
    }
}

/// Endpoint classification of a set of trajectories, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalDistribution {
    pub n: usize,
    /// Endpoint inside the left goal region.
    pub left: f64,
    pub right: f64,
    pub neither: f64,
    /// Two-way split by nearest trained goal center.
    pub nearest_left: f64,
    pub nearest_right: f64,
}

impl GoalDistribution {
    pub fn of(endpoints: &[Point], geometry: &TaskGeometry) -> Self {
        let n = endpoints.len();
        let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
        let mut counts = [0usize; 3];
        let mut nearest_left = 0;
        for &p in endpoints {
            match geometry.classify(p) {
                Some(Label::Left) => counts[0] += 1,
                Some(Label::Right) => counts[1] += 1,
                _ => counts[2] += 1,
            }
            if geometry.nearest_trained_goal(p) == Label::Left {
                nearest_left += 1;
            }
        }
        Self {
            n,
            left: pct(counts[0]),
            right: pct(counts[1]),
            neither: pct(counts[2]),
            nearest_left: pct(nearest_left),
            nearest_right: pct(n - nearest_left),
        }
    }

    pub fn percent(&self, label: Label) -> f64 {
        match label {
            Label::Left => self.left,
            Label::Right => self.right,
            Label::Center => self.neither,
        }
    }

    pub fn nearest_percent(&self, label: Label) -> f64 {
        match label {
            Label::Left => self.nearest_left,
            _ => self.nearest_right,
        }
    }
}

/// One row of a KLD time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KldPoint {
    pub t: usize,
    pub layer: usize,
    pub mean: f64,
    pub std: f64,
}

/// Per-step, per-layer mean and σ of the unweighted KLD over traces.
/// `traces[i][t][l]`.
pub fn kld_timeseries(traces: &[Vec<Vec<f64>>]) -> Result<Vec<KldPoint>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Config("kld_timeseries needs at least one trace".into()))?;
    let steps = first.len();
    let layers = first.first().map_or(0, Vec::len);
    if traces.iter().any(|tr| tr.len() != steps || tr.iter().any(|row| row.len() != layers)) {
        return Err(Error::DimensionMismatch {
            op: "kld_timeseries",
            expected: steps * layers,
            got: 0,
        });
    }
    let mut out = Vec::with_capacity(steps * layers);
    for t in 0..steps {
        for l in 0..layers {
            let v: Vec<f64> = traces.iter().map(|tr| tr[t][l]).collect();
            let s = Stat::of(&v).expect("non-empty");
            out.push(KldPoint {
                t,
                layer: l,
                mean: s.mean,
                std: s.std,
            });
        }
    }
    Ok(out)
}

pub fn kld_csv(series: &[KldPoint]) -> String {
    let mut s = String::from("t,layer,mean,std\n");
    for p in series {
        s.push_str(&format!("{},{},{},{}\n", p.t, p.layer, p.mean, p.std));
    }
    s
}

/// KLD at the second step divided by the mean over later steps, summed
/// over layers.
pub fn kld_spike_ratio(series: &[KldPoint]) -> Option<f64> {
    let steps = series.iter().map(|p| p.t).max()? + 1;
    if steps < 3 {
        return None;
    }
    let at = |t: usize| series.iter().filter(|p| p.t == t).map(|p| p.mean).sum::<f64>();
    let later = (2..steps).map(at).sum::<f64>() / (steps - 2) as f64;
    Some(at(1) / later)
}
