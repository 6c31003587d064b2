use serde::{Deserialize, Serialize};

use super::{endpoint_sq, select, Candidate, PlanRequest, PlanResult};
use crate::baselines::{driven_backward, driven_rollout, InputPlan, TrainedFm};
use crate::error::{Error, Result};
use crate::numeric::{domain_seed, AdamState, SeededRng};
use crate::par::Execution;
use crate::pvrnn::ElboReport;

/// Starting point of the searched input sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FmInit {
    /// Every input equals the initial state. Deterministic, so a single
    /// candidate is run regardless of `n_candidates`.
    #[default]
    Replicate,
    /// Inputs uniform in the unit square, one draw per candidate.
    Random,
}

/// Searches the forward model's input sequence `u_1..u_{T−1}` so that the
/// last prediction lands on the goal. The planned trajectory is the
/// initial state followed by the model's predictions.
pub fn plan_fm(model: &TrainedFm, request: &PlanRequest, init: FmInit, exec: Execution) -> Result<PlanResult> {
    let config = &model.config.model;
    let dim = config.output_dim;
    request.validate(config.seq_len, dim)?;
    let steps = request.steps;
    let inputs = steps - 1;
    let n = match init {
        FmInit::Replicate => 1,
        FmInit::Random => request.n_candidates,
    };
    let results = exec.map(n, |c| -> Result<Candidate> {
        let external: Vec<f64> = match init {
            FmInit::Replicate => request.initial.repeat(inputs),
            FmInit::Random => {
                let mut rng = SeededRng::derived(domain_seed(request.seed, "fm-plan"), c as u64);
                (0..inputs * dim).map(|_| rng.uniform()).collect()
            }
        };
        let mut plan = InputPlan {
            feedback: vec![0.0; inputs],
            external,
        };
        let mut adam = AdamState::for_rate(format!("u[{c}]"), plan.external.len(), request.rate);
        let last = (inputs - 1) * dim;
        for _ in 0..request.epochs {
            let tr = driven_rollout(&model.params.net, config, None, &plan)?;
            let mut gx = vec![0.0; inputs * dim];
            for i in 0..dim {
                gx[last + i] = tr.x[last + i] - request.goal[i];
            }
            let g = driven_backward(&model.params.net, config, &plan, &tr, &gx, false)?;
            adam.step(&mut plan.external, &g.external, request.rate)?;
        }
        let tr = driven_rollout(&model.params.net, config, None, &plan)?;
        let mut trajectory = request.initial.clone();
        trajectory.extend_from_slice(&tr.x);
        let acc = -0.5 * endpoint_sq(&tr.x[last..], &request.goal);
        let report = ElboReport::new(acc, 0.0, 0.0);
        if !report.elbo.is_finite() {
            return Err(Error::NonFinite(format!("FM plan candidate {c}")));
        }
        Ok(Candidate {
            report,
            trajectory,
            decision: plan.external,
        })
    });
    select(results, request.epochs)
}
