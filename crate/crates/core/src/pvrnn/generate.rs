//! Open-loop generation from a trained model.

use super::config::ModelConfig;
use super::params::{AdaptationVars, NetworkParams};
use super::trace::{rollout, ForwardTrace, NoiseTable, Sampling};
use crate::error::Result;
use crate::numeric::SeededRng;
use crate::par::Execution;

/// Samples every `z_t` from the prior; the first step from `N(0, I)`.
pub fn forward_prior(
    params: &NetworkParams,
    config: &ModelConfig,
    rng: &mut SeededRng,
    steps: usize,
) -> Result<ForwardTrace> {
    forward_prior_capped(params, config, rng, steps, f64::INFINITY)
}

/// [`forward_prior`] with every σ clamped to at most `sigma_cap`.
pub fn forward_prior_capped(
    params: &NetworkParams,
    config: &ModelConfig,
    rng: &mut SeededRng,
    steps: usize,
    sigma_cap: f64,
) -> Result<ForwardTrace> {
    let noise = NoiseTable::sample(rng, steps, config.layout().z_total);
    rollout(params, config, None, &noise, Sampling::prior().with_sigma_cap(sigma_cap))
}

/// Samples every `z_t` from the posterior given by `adapt`.
pub fn forward_posterior(
    params: &NetworkParams,
    adapt: &AdaptationVars,
    config: &ModelConfig,
    rng: &mut SeededRng,
) -> Result<ForwardTrace> {
    let noise = NoiseTable::sample(rng, adapt.steps, config.layout().z_total);
    rollout(params, config, Some(adapt), &noise, Sampling::posterior(adapt.steps))
}

/// `n` independent prior rollouts, rollout `i` drawing from stream `i` of `seed`.
pub fn prior_rollouts(
    params: &NetworkParams,
    config: &ModelConfig,
    seed: u64,
    n: usize,
    exec: Execution,
) -> Result<Vec<ForwardTrace>> {
    exec.map(n, |i| {
        forward_prior(params, config, &mut SeededRng::derived(seed, i as u64), config.seq_len)
    })
    .into_iter()
    .collect()
}

/// Rollouts with `z_1` from the trained posterior and every later `z_t`
/// from the prior.
///
/// `adapt` is the full trained posterior of one sequence. Only its first
/// step drives sampling; the rest is recorded so the trace's KLD compares
/// the regenerated prior against the trained posterior at every step.
pub fn regenerate_target(
    params: &NetworkParams,
    adapt: &AdaptationVars,
    config: &ModelConfig,
    seed: u64,
    n: usize,
    exec: Execution,
) -> Result<Vec<ForwardTrace>> {
    regenerate_target_capped(params, adapt, config, seed, n, exec, f64::INFINITY)
}

/// [`regenerate_target`] with every σ clamped to at most `sigma_cap`.
pub fn regenerate_target_capped(
    params: &NetworkParams,
    adapt: &AdaptationVars,
    config: &ModelConfig,
    seed: u64,
    n: usize,
    exec: Execution,
    sigma_cap: f64,
) -> Result<Vec<ForwardTrace>> {
    let width = config.layout().z_total;
    let sampling = Sampling {
        posterior_steps: 1,
        sigma_cap,
    };
    exec.map(n, |i| {
        let mut rng = SeededRng::derived(seed, i as u64);
        let noise = NoiseTable::sample(&mut rng, adapt.steps, width);
        rollout(params, config, Some(adapt), &noise, sampling)
    })
    .into_iter()
    .collect()
}
