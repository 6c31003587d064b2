use super::{endpoint_sq, select, Candidate, PlanRequest, PlanResult};
use crate::baselines::{si_backward, si_plan, si_rollout, si_width, SiInit, TrainedSi};
use crate::error::{Error, Result};
use crate::numeric::{domain_seed, AdamState, SeededRng};
use crate::par::Execution;
use crate::pvrnn::ElboReport;

/// Infers the first-step latent of the SI model; later steps run closed
/// loop on the model's own output.
///
/// Candidate 0 replays zero noise, so with zero epochs it is the
/// prior-mean rollout; the others draw their first-step noise from their
/// own stream.
pub fn plan_si(model: &TrainedSi, request: &PlanRequest, exec: Execution) -> Result<PlanResult> {
    let config = &model.config.model;
    let dim = config.output_dim;
    request.validate(config.seq_len, dim)?;
    let width = si_width(config);
    let steps = request.steps;
    let plan = si_plan(None, steps, dim, 1.0);
    let w = config.w_init;
    let results = exec.map(request.n_candidates, |c| -> Result<Candidate> {
        let mut eps = vec![0.0; width];
        if c > 0 {
            SeededRng::derived(domain_seed(request.seed, "si-plan"), c as u64).fill_standard_normal(&mut eps);
        }
        let mut init = SiInit::zeros(width);
        let mut flat = init.flatten();
        let mut adam = AdamState::for_rate(format!("A1[{c}]"), flat.len(), request.rate);
        for _ in 0..request.epochs {
            let tr = si_rollout(&model.params, config, &init, &eps, &plan)?;
            let mut gx = vec![0.0; steps * dim];
            let last = (steps - 1) * dim;
            for i in 0..dim {
                gx[i] += tr.inner.x[i] - request.initial[i];
                gx[last + i] += tr.inner.x[last + i] - request.goal[i];
            }
            let (_, ga) = si_backward(&model.params, config, &plan, &tr, &gx, false)?;
            adam.step(&mut flat, &ga.flatten(), request.rate)?;
            init.set_flat(&flat);
        }
        let tr = si_rollout(&model.params, config, &init, &eps, &plan)?;
        let x = tr.inner.x.clone();
        let acc = -0.5
            * (endpoint_sq(&x[..dim], &request.initial) + endpoint_sq(&x[(steps - 1) * dim..], &request.goal));
        let kld = tr.kld();
        let report = ElboReport::new(acc, w * kld, kld);
        if !report.elbo.is_finite() {
            return Err(Error::NonFinite(format!("SI plan candidate {c}")));
        }
        Ok(Candidate {
            report,
            trajectory: x,
            decision: flat,
        })
    });
    select(results, request.epochs)
}
