use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::trace::ForwardTrace;
use crate::error::{Error, Result};

/// Lower-bound decomposition of one rollout.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ElboReport {
    pub accuracy: f64,
    pub complexity: f64,
    pub elbo: f64,
    /// Unweighted KLD summed over steps and layers.
    pub kld_pq: f64,
}

impl ElboReport {
    pub fn new(accuracy: f64, complexity: f64, kld_pq: f64) -> Self {
        Self {
            accuracy,
            complexity,
            elbo: accuracy - complexity,
            kld_pq,
        }
    }

    /// Component-wise sum; `elbo` is recomputed rather than added.
    pub fn sum<'a>(reports: impl IntoIterator<Item = &'a ElboReport>) -> Self {
        let (mut a, mut c, mut k) = (0.0, 0.0, 0.0);
        for r in reports {
            a += r.accuracy;
            c += r.complexity;
            k += r.kld_pq;
        }
        Self::new(a, c, k)
    }
}

/// `(weighted, unweighted)` KLD over all steps and layers.
///
/// Zero when the rollout had no posterior.
pub fn complexity(trace: &ForwardTrace, config: &ModelConfig) -> (f64, f64) {
    if !trace.has_posterior {
        return (0.0, 0.0);
    }
    let (mut weighted, mut raw) = (0.0, 0.0);
    for t in 0..trace.steps {
        for l in 0..config.layers.len() {
            let k = trace.kld_at(t, l);
            weighted += config.kld_weight(t, l) * k;
            raw += k;
        }
    }
    (weighted, raw)
}

/// Unweighted KLD per step and layer, `steps × layers`.
pub fn kld_per_step(trace: &ForwardTrace) -> Vec<Vec<f64>> {
    let layers = trace.layout.layers();
    (0..trace.steps)
        .map(|t| (0..layers).map(|l| trace.kld_at(t, l)).collect())
        .collect()
}

fn check_target(trace: &ForwardTrace, target: &[f64]) -> Result<()> {
    let want = trace.steps * trace.layout.out;
    if target.len() != want {
        return Err(Error::DimensionMismatch {
            op: "elbo target",
            expected: want,
            got: target.len(),
        });
    }
    Ok(())
}

/// Accuracy over every step plus the weighted complexity.
/// `target` is `steps × out`, row-major.
pub fn elbo(trace: &ForwardTrace, target: &[f64], config: &ModelConfig) -> Result<ElboReport> {
    check_target(trace, target)?;
    let accuracy = -0.5
        * trace
            .x
            .iter()
            .zip(target)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    let (c, k) = complexity(trace, config);
    Ok(ElboReport::new(accuracy, c, k))
}

/// Planning bound: accuracy on the first and last steps only.
pub fn estimated_lower_bound(
    trace: &ForwardTrace,
    initial: &[f64],
    goal: &[f64],
    config: &ModelConfig,
) -> Result<ElboReport> {
    let out = trace.layout.out;
    if initial.len() != out || goal.len() != out {
        return Err(Error::DimensionMismatch {
            op: "plan endpoints",
            expected: out,
            got: if initial.len() != out { initial.len() } else { goal.len() },
        });
    }
    if trace.steps == 0 {
        return Err(Error::Config("planning trace is empty".into()));
    }
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let accuracy = -0.5 * (sq(trace.x_at(0), initial) + sq(trace.x_at(trace.steps - 1), goal));
    let (c, k) = complexity(trace, config);
    Ok(ElboReport::new(accuracy, c, k))
}

/// `x − x̄` with step `t` zeroed where `keep[t]` is false.
pub fn masked_output_grad(trace: &ForwardTrace, target: &[f64], keep: &[bool]) -> Result<Vec<f64>> {
    check_target(trace, target)?;
    if keep.len() != trace.steps {
        return Err(Error::DimensionMismatch {
            op: "error mask",
            expected: trace.steps,
            got: keep.len(),
        });
    }
    let out = trace.layout.out;
    Ok(trace
        .x
        .iter()
        .zip(target)
        .enumerate()
        .map(|(i, (x, y))| if keep[i / out] { x - y } else { 0.0 })
        .collect())
}

/// Output gradient of the negated planning bound.
pub fn endpoint_output_grad(trace: &ForwardTrace, initial: &[f64], goal: &[f64]) -> Vec<f64> {
    let out = trace.layout.out;
    let mut g = vec![0.0; trace.steps * out];
    let last = trace.steps - 1;
    for i in 0..out {
        g[i] += trace.x_at(0)[i] - initial[i];
        g[last * out + i] += trace.x_at(last)[i] - goal[i];
    }
    g
}
