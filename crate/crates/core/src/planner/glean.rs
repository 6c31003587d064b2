use super::{select, Candidate, PlanRequest, PlanResult};
use crate::error::{Error, Result};
use crate::numeric::{domain_seed, AdamState, SeededRng};
use crate::par::Execution;
use crate::pvrnn::{
    backward, endpoint_output_grad, estimated_lower_bound, rollout, AdaptationVars, ModelConfig,
    NetworkParams, NoiseTable, Sampling,
};

/// Optimises one zero-initialised `A∅` against the negated planning bound.
///
/// The candidate's noise is drawn once and replayed every epoch, so the
/// optimisation is deterministic and the returned trajectory is the one
/// the bound was measured on.
pub fn plan_glean_candidate(
    params: &NetworkParams,
    config: &ModelConfig,
    request: &PlanRequest,
    candidate: usize,
) -> Result<(crate::pvrnn::ElboReport, Vec<f64>, AdaptationVars)> {
    let width = config.layout().z_total;
    let steps = request.steps;
    let mut rng = SeededRng::derived(domain_seed(request.seed, "glean-plan"), candidate as u64);
    let noise = NoiseTable::sample(&mut rng, steps, width);
    let sampling = Sampling::posterior(steps);
    let mut adapt = AdaptationVars::zeros(steps, width);
    let mut adam = AdamState::for_rate(format!("A0[{candidate}]"), 2 * steps * width, request.rate);
    let mut flat = adapt.flatten();
    for _ in 0..request.epochs {
        let tr = rollout(params, config, Some(&adapt), &noise, sampling)?;
        let gx = endpoint_output_grad(&tr, &request.initial, &request.goal);
        let g = backward(params, config, &tr, &gx, false)?;
        let ga = g.adapt.expect("posterior rollout").flatten();
        adam.step(&mut flat, &ga, request.rate)?;
        adapt.set_flat(&flat);
    }
    let tr = rollout(params, config, Some(&adapt), &noise, sampling)?;
    let report = estimated_lower_bound(&tr, &request.initial, &request.goal, config)?;
    if !report.elbo.is_finite() || !tr.x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("plan candidate {candidate}")));
    }
    Ok((report, tr.x, adapt))
}

/// GLean: infer `A∅` with the network weights frozen.
pub fn plan_glean(
    params: &NetworkParams,
    config: &ModelConfig,
    request: &PlanRequest,
    exec: Execution,
) -> Result<PlanResult> {
    request.validate(config.seq_len, config.output_dim)?;
    let results = exec.map(request.n_candidates, |c| {
        plan_glean_candidate(params, config, request, c).map(|(report, trajectory, a)| Candidate {
            report,
            trajectory,
            decision: a.flatten(),
        })
    });
    select(results, request.epochs)
}
