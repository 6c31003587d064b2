//! Trend checks over completed stage records.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use glean_core::dataset::Label;
use glean_core::pvrnn::MetaPrior;

use crate::pipeline::{STAGE_COMPARE, STAGE_LOOKAHEAD, STAGE_PLAN, STAGE_PRIOR, STAGE_REGEN, STAGE_TRAIN};
use crate::record::{Group, RunRecord};

pub const TRAIN_BUDGET_SECONDS: f64 = 30.0 * 60.0;

/// Wall-clock seconds spent training the three PV-RNNs, read from the
/// train stage's `timing.json`.
pub fn training_seconds(out_dir: &Path) -> Option<f64> {
    let text = std::fs::read_to_string(out_dir.join(STAGE_TRAIN).join("timing.json")).ok()?;
    let m: BTreeMap<String, f64> = serde_json::from_str(&text).ok()?;
    let names = MetaPrior::ALL.map(MetaPrior::name);
    names.iter().map(|k| m.get(*k)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// A needed stage record is absent.
    Missing,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Missing => "MISSING",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub status: Status,
    pub detail: String,
}

impl Outcome {
    fn new(id: u8, title: &'static str, pass: bool, detail: String) -> Self {
        Self {
            id,
            title,
            status: if pass { Status::Pass } else { Status::Fail },
            detail,
        }
    }

    fn missing(id: u8, title: &'static str, what: &str) -> Self {
        Self {
            id,
            title,
            status: Status::Missing,
            detail: format!("no completed {what} record"),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} criterion {}: {} ({})", self.status, self.id, self.title, self.detail)
    }
}

fn find<'a>(records: &'a [RunRecord], stage: &str) -> Option<&'a RunRecord> {
    records.iter().find(|r| r.stage == stage)
}

fn mean_of(g: Option<&Group>, f: impl Fn(&Group) -> Option<f64>) -> f64 {
    g.and_then(f).unwrap_or(f64::NAN)
}

fn rmse_mean(g: Option<&Group>) -> f64 {
    mean_of(g, |g| g.aggregate.rmse.map(|s| s.mean))
}

fn gd_mean(g: Option<&Group>) -> f64 {
    mean_of(g, |g| g.aggregate.goal_deviation.map(|s| s.mean))
}

const W: &str = "weak";
const I: &str = "intermediate";
const S: &str = "strong";

/// Plan-time KLD on the test goals, with the training-set posterior KLD
/// shown alongside.
pub fn meta_prior_trend(records: &[RunRecord], train_seconds: Option<f64>) -> Outcome {
    const T: &str = "meta-prior KLD trend";
    let (Some(train), Some(plan)) = (find(records, STAGE_TRAIN), find(records, STAGE_PLAN)) else {
        return Outcome::missing(3, T, "train or plan");
    };
    let kld = |g: Option<&Group>| mean_of(g, |g| g.aggregate.kld_pq.map(|s| s.mean));
    let k = |n: &str| kld(plan.group(&format!("{n}/test")));
    let (w, i, s) = (k(W), k(I), k(S));
    let ratio = w / s;
    let t = |n: &str| kld(train.group(n));
    let in_budget = train_seconds.is_none_or(|t| t <= TRAIN_BUDGET_SECONDS);
    let epochs = train.spec.model.epochs;
    Outcome::new(
        3,
        T,
        w > i && i > s && ratio >= 50.0 && epochs >= 15_000 && in_budget,
        format!(
            "mean plan kld_pq weak {w:.4} > intermediate {i:.4} > strong {s:.4}, weak/strong {ratio:.1} >= 50; \
             training-set kld_pq {:.3} / {:.3} / {:.3}; {epochs} epochs, training {}",
            t(W),
            t(I),
            t(S),
            train_seconds.map_or("time not measured".into(), |t| format!("{t:.0} s <= 1800 s"))
        ),
    )
}

pub fn prior_distribution(records: &[RunRecord]) -> Outcome {
    const T: &str = "prior-generation goal split";
    let Some(r) = find(records, STAGE_PRIOR) else {
        return Outcome::missing(4, T, STAGE_PRIOR);
    };
    let Some(d) = r.group(I).and_then(|g| g.goal_distribution) else {
        return Outcome::missing(4, T, "intermediate prior-gen");
    };
    let ok = |p: f64| (35.0..=65.0).contains(&p);
    Outcome::new(
        4,
        T,
        ok(d.nearest_left) && ok(d.nearest_right),
        format!(
            "intermediate, {} rollouts: nearest-goal split left {:.1}% / right {:.1}% in [35, 65] \
             (in-region left {:.1}%, right {:.1}%, neither {:.1}%)",
            d.n, d.nearest_left, d.nearest_right, d.left, d.right, d.neither
        ),
    )
}

pub fn target_regeneration(records: &[RunRecord]) -> Outcome {
    const T: &str = "target regeneration";
    let (Some(regen), Some(prior)) = (find(records, STAGE_REGEN), find(records, STAGE_PRIOR)) else {
        return Outcome::missing(5, T, "target-regen or prior-gen");
    };
    let label = regen.spec.regen_label;
    let strong = regen.group(S);
    let (Some(sd), Some(wd), Some(wp)) = (
        strong.and_then(|g| g.goal_distribution),
        regen.group(W).and_then(|g| g.goal_distribution),
        prior.group(W).and_then(|g| g.goal_distribution),
    ) else {
        return Outcome::missing(5, T, "weak/strong distribution");
    };
    let reached = sd.percent(label);
    let shift = (wd.nearest_percent(Label::Left) - wp.nearest_percent(Label::Left)).abs();
    let spike = mean_of(strong, |g| g.scalars.get("kld_spike_ratio").copied());
    Outcome::new(
        5,
        T,
        reached >= 95.0 && shift <= 15.0 && spike >= 5.0,
        format!(
            "strong reaches {} region in {reached:.1}% >= 95%; weak left share {:.1}% vs prior {:.1}% \
             (shift {shift:.1} <= 15); strong KLD t=2 spike {spike:.2}x >= 5x",
            label.name(),
            wd.nearest_left,
            wp.nearest_left
        ),
    )
}

pub fn plan_quality(records: &[RunRecord]) -> Outcome {
    const T: &str = "plan quality ordering";
    let Some(r) = find(records, STAGE_PLAN) else {
        return Outcome::missing(6, T, STAGE_PLAN);
    };
    let g = |n: &str| r.group(&format!("{n}/test"));
    let (w, i, s) = (rmse_mean(g(W)), rmse_mean(g(I)), rmse_mean(g(S)));
    let gd = gd_mean(g(I));
    Outcome::new(
        6,
        T,
        i < w && i < s && gd < 1e-3,
        format!("mean RMSE intermediate {i:.5} < weak {w:.5} and < strong {s:.5}; intermediate GD {gd:.3e} < 1e-3"),
    )
}

pub fn unlearned_goals(records: &[RunRecord]) -> Outcome {
    const T: &str = "unlearned-goal confinement";
    let Some(r) = find(records, STAGE_PLAN) else {
        return Outcome::missing(7, T, STAGE_PLAN);
    };
    let trained = gd_mean(r.group("intermediate/test"));
    let center = gd_mean(r.group("intermediate/center"));
    let ratio = center / trained;
    Outcome::new(
        7,
        T,
        ratio >= 10.0,
        format!("intermediate GD center {center:.3e} / trained {trained:.3e} = {ratio:.1} >= 10"),
    )
}

pub fn model_comparison(records: &[RunRecord]) -> Outcome {
    const T: &str = "FM / SI / GLean comparison";
    let (Some(c), Some(l)) = (find(records, STAGE_COMPARE), find(records, STAGE_LOOKAHEAD)) else {
        return Outcome::missing(8, T, "compare or lookahead");
    };
    let (g, s, f) = (
        rmse_mean(c.group("glean")),
        rmse_mean(c.group("si")),
        rmse_mean(c.group("fm")),
    );
    let la = [
        rmse_mean(l.group("fm")),
        rmse_mean(l.group("si")),
        rmse_mean(l.group("glean")),
    ];
    let la_spread = la.iter().copied().fold(f64::NEG_INFINITY, f64::max) / la.iter().copied().fold(f64::INFINITY, f64::min);
    let si_ratio = s.max(g) / s.min(g);
    Outcome::new(
        8,
        T,
        f >= 3.0 * g && si_ratio <= 1.5 && la_spread <= 2.0,
        format!(
            "plan RMSE FM {f:.4} >= 3 x GLean {g:.4} ({:.1}x); SI {s:.4} within {si_ratio:.2}x <= 1.5x; \
             look-ahead RMSE FM {:.4} / SI {:.4} / GLean {:.4}, spread {la_spread:.2}x <= 2x",
            f / g,
            la[0],
            la[1],
            la[2]
        ),
    )
}

/// Criteria 3 to 8, in order.
pub fn evaluate(records: &[RunRecord], train_seconds: Option<f64>) -> Vec<Outcome> {
    vec![
        meta_prior_trend(records, train_seconds),
        prior_distribution(records),
        target_regeneration(records),
        plan_quality(records),
        unlearned_goals(records),
        model_comparison(records),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Metrics;
    use crate::spec::ExperimentSpec;

    fn item(rmse: f64, gd: f64, kld: f64) -> Metrics {
        Metrics {
            id: "0".into(),
            rmse: Some(rmse),
            goal_deviation: Some(gd),
            kld_pq: Some(kld),
            ..Metrics::default()
        }
    }

    fn plan_record(center_gd: f64) -> RunRecord {
        let g = |n: &str, r, gd, k| Group::new(n, Some("PVRNN"), vec![item(r, gd, k)]);
        RunRecord::new(
            STAGE_PLAN,
            &ExperimentSpec::bundled(),
            vec![
                g("weak/test", 0.06, 5e-6, 150.0),
                g("intermediate/test", 0.03, 8e-5, 3.0),
                g("strong/test", 0.04, 7e-4, 0.2),
                g("intermediate/center", 0.2, center_gd, 9.0),
            ],
        )
    }

    #[test]
    fn plan_checks_follow_the_thresholds() {
        let r = [plan_record(1e-3)];
        assert_eq!(plan_quality(&r).status, Status::Pass);
        assert_eq!(unlearned_goals(&r).status, Status::Pass);
        let r = [plan_record(7e-4)];
        assert_eq!(unlearned_goals(&r).status, Status::Fail);
    }

    #[test]
    fn kld_trend_needs_both_records_and_the_budget() {
        let plan = plan_record(1.0);
        assert_eq!(meta_prior_trend(&[plan.clone()], None).status, Status::Missing);
        let train = RunRecord::new(STAGE_TRAIN, &ExperimentSpec::bundled(), vec![]);
        let both = [train, plan];
        assert_eq!(meta_prior_trend(&both, Some(100.0)).status, Status::Pass);
        assert_eq!(meta_prior_trend(&both, Some(2000.0)).status, Status::Fail);
    }

    #[test]
    fn missing_stages_are_reported() {
        let out = evaluate(&[], None);
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|o| o.status == Status::Missing));
        assert!(out[0].to_string().starts_with("MISSING criterion 3"));
    }
}
