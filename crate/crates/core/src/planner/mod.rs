//! Goal-directed plan generation and one-step look-ahead.
//!
//! Every planner optimises a set of independent candidates, each with its
//! own derived random stream, and returns the candidate with the highest
//! final bound (lowest index on ties). Candidates whose objective turns
//! non-finite are dropped.

mod fm;
mod glean;
mod lookahead;
mod si;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pvrnn::ElboReport;

pub use fm::{plan_fm, FmInit};
pub use glean::{plan_glean, plan_glean_candidate};
pub use lookahead::{one_step_lookahead, LookaheadModel, LookaheadOptions, LookaheadResult};
pub use si::plan_si;

pub const DEFAULT_PLAN_EPOCHS: usize = 500;
pub const DEFAULT_PLAN_RATE: f64 = 0.05;
pub const DEFAULT_CANDIDATES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub initial: Vec<f64>,
    pub goal: Vec<f64>,
    pub steps: usize,
    pub rate: f64,
    pub epochs: usize,
    pub n_candidates: usize,
    pub seed: u64,
}

impl PlanRequest {
    pub fn new(initial: Vec<f64>, goal: Vec<f64>, steps: usize, seed: u64) -> Self {
        Self {
            initial,
            goal,
            steps,
            rate: DEFAULT_PLAN_RATE,
            epochs: DEFAULT_PLAN_EPOCHS,
            n_candidates: DEFAULT_CANDIDATES,
            seed,
        }
    }

    pub fn validate(&self, model_steps: usize, dim: usize) -> Result<()> {
        if self.initial.len() != dim || self.goal.len() != dim {
            return Err(Error::DimensionMismatch {
                op: "plan request state",
                expected: dim,
                got: self.initial.len().max(self.goal.len()),
            });
        }
        let unit = |v: &[f64]| v.iter().all(|x| (0.0..=1.0).contains(x));
        if !unit(&self.initial) || !unit(&self.goal) {
            return Err(Error::Config("plan states must lie in [0, 1]".into()));
        }
        if self.steps != model_steps {
            return Err(Error::Config(format!(
                "plan horizon {} does not match the model's {model_steps} steps",
                self.steps
            )));
        }
        if self.n_candidates == 0 {
            return Err(Error::Config("n_candidates must be >= 1".into()));
        }
        if !(self.rate > 0.0) {
            return Err(Error::Config(format!("plan rate must be > 0, got {}", self.rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    /// `steps × dim`, row-major.
    pub trajectory: Vec<f64>,
    /// Optimised decision variables of the winning candidate, flattened.
    pub decision: Vec<f64>,
    /// Final bound of the winner; `elbo` is the estimated lower bound.
    pub report: ElboReport,
    /// Final bound per candidate, `None` when dropped.
    pub candidate_bounds: Vec<Option<f64>>,
    pub best: usize,
    pub epochs: usize,
}

pub(crate) struct Candidate {
    pub report: ElboReport,
    pub trajectory: Vec<f64>,
    pub decision: Vec<f64>,
}

/// Picks the surviving candidate with the highest bound, lowest index first.
pub(crate) fn select(results: Vec<Result<Candidate>>, epochs: usize) -> Result<PlanResult> {
    let n = results.len();
    let mut bounds = Vec::with_capacity(n);
    let mut best: Option<(usize, Candidate)> = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(c) if c.report.elbo.is_finite() => {
                bounds.push(Some(c.report.elbo));
                if best.as_ref().is_none_or(|(_, b)| c.report.elbo > b.report.elbo) {
                    best = Some((i, c));
                }
            }
            Ok(_) => bounds.push(None),
            Err(e) if e.is_numerical() => bounds.push(None),
            Err(e) => return Err(e),
        }
    }
    let (i, c) = best.ok_or(Error::AllCandidatesDropped(n))?;
    Ok(PlanResult {
        trajectory: c.trajectory,
        decision: c.decision,
        report: c.report,
        candidate_bounds: bounds,
        best: i,
        epochs,
    })
}

pub(crate) fn endpoint_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
