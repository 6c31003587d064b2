//! Finite-difference certification of the hand-written BPTT on a small
//! model with replayed noise.

use serde::{Deserialize, Serialize};

use super::backward::backward;
use super::config::{LayerConfig, ModelConfig};
use super::elbo::{elbo, endpoint_output_grad, estimated_lower_bound, masked_output_grad};
use super::params::{AdaptationVars, NetworkParams};
use super::trace::{rollout, NoiseTable, Sampling};
use crate::error::Result;
use crate::numeric::{finite_diff_gradient, relative_error, SeededRng};

pub const CERTIFY_STEP: f64 = 1e-5;
/// Magnitude below which relative error is measured against this floor.
pub const CERTIFY_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub label: String,
    pub coordinates: usize,
    pub worst_relative_error: f64,
}

/// d = 4, z = 1, T = 5.
pub fn certification_config() -> ModelConfig {
    ModelConfig {
        layers: vec![LayerConfig {
            d_size: 4,
            z_size: 1,
            tau: 2.0,
            w: 0.5,
        }],
        w_init: 0.3,
        output_dim: 2,
        seq_len: 5,
        lr: 0.001,
        epochs: 1,
        error_dropout: 0.0,
        seed: 0,
    }
}

fn worst(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| relative_error(*x, *y, CERTIFY_FLOOR))
        .fold(0.0, f64::max)
}

/// Checks `−ELBO` against all weights and `A`, and the negated planning
/// bound against `A∅`, on a randomly perturbed model.
pub fn certify_gradients(config: &ModelConfig, seed: u64) -> Result<Vec<GradientCheck>> {
    config.validate()?;
    let mut rng = SeededRng::new(seed);
    let mut params = NetworkParams::init(config, &mut rng);
    let w: Vec<f64> = params
        .flatten()
        .iter()
        .map(|w| 1.5 * w + 0.05 * rng.standard_normal())
        .collect();
    params.set_flat(&w);
    let mut adapt = AdaptationVars::for_config(config);
    let a: Vec<f64> = (0..2 * adapt.mu.len()).map(|_| 0.5 * rng.standard_normal()).collect();
    adapt.set_flat(&a);
    let steps = config.seq_len;
    let noise = NoiseTable::sample(&mut rng, steps, config.layout().z_total);
    let target: Vec<f64> = (0..steps * config.output_dim).map(|_| rng.uniform()).collect();
    let initial: Vec<f64> = target[..config.output_dim].to_vec();
    let goal: Vec<f64> = (0..config.output_dim).map(|_| rng.uniform()).collect();
    let sampling = Sampling::posterior(steps);

    let neg_elbo = |p: &NetworkParams, ad: &AdaptationVars| -> f64 {
        rollout(p, config, Some(ad), &noise, sampling)
            .and_then(|tr| elbo(&tr, &target, config))
            .map_or(f64::NAN, |r| -r.elbo)
    };
    let tr = rollout(&params, config, Some(&adapt), &noise, sampling)?;
    let gx = masked_output_grad(&tr, &target, &vec![true; steps])?;
    let g = backward(&params, config, &tr, &gx, true)?;
    let analytic_w = g.params.expect("weights requested").flatten();
    let analytic_a = g.adapt.expect("posterior rollout").flatten();

    let fd_w = finite_diff_gradient(
        |v| {
            let mut p = params.clone();
            p.set_flat(v);
            neg_elbo(&p, &adapt)
        },
        &w,
        CERTIFY_STEP,
    )?;
    let fd_a = finite_diff_gradient(
        |v| {
            let mut ad = adapt.clone();
            ad.set_flat(v);
            neg_elbo(&params, &ad)
        },
        &a,
        CERTIFY_STEP,
    )?;

    let gx_plan = endpoint_output_grad(&tr, &initial, &goal);
    let analytic_plan = backward(&params, config, &tr, &gx_plan, false)?
        .adapt
        .expect("posterior rollout")
        .flatten();
    let fd_plan = finite_diff_gradient(
        |v| {
            let mut ad = adapt.clone();
            ad.set_flat(v);
            rollout(&params, config, Some(&ad), &noise, sampling)
                .and_then(|tr| estimated_lower_bound(&tr, &initial, &goal, config))
                .map_or(f64::NAN, |r| -r.elbo)
        },
        &a,
        CERTIFY_STEP,
    )?;

    Ok(vec![
        GradientCheck {
            label: "elbo/weights".into(),
            coordinates: w.len(),
            worst_relative_error: worst(&analytic_w, &fd_w),
        },
        GradientCheck {
            label: "elbo/adaptation".into(),
            coordinates: a.len(),
            worst_relative_error: worst(&analytic_a, &fd_a),
        },
        GradientCheck {
            label: "plan/adaptation".into(),
            coordinates: a.len(),
            worst_relative_error: worst(&analytic_plan, &fd_plan),
        },
    ])
}
