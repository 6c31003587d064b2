//! Deterministic forward model: predicts the next position from the current
//! one.

use serde::{Deserialize, Serialize};

use super::driven::{driven_backward, driven_rollout, DrivenNet, InputPlan};
use super::BaselineConfig;
use crate::error::{Error, Result};
use crate::numeric::{clip_global_norm, domain_seed, AdamState, SeededRng};
use crate::par::Execution;
use crate::pvrnn::{layer_forward, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmParams {
    pub net: DrivenNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedFm {
    pub config: BaselineConfig,
    pub params: FmParams,
    /// Summed squared-error loss per epoch.
    pub history: Vec<f64>,
}

/// One step of the forward model with per-layer state vectors.
pub fn fm_step(
    h_prev: &[Vec<f64>],
    d_prev: &[Vec<f64>],
    u_t: &[f64],
    params: &FmParams,
    config: &ModelConfig,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    let n = config.layers.len();
    let net = &params.net;
    if h_prev.len() != n || d_prev.len() != n {
        return Err(Error::DimensionMismatch {
            op: "fm_step layers",
            expected: n,
            got: h_prev.len().min(d_prev.len()),
        });
    }
    let mut h = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for (l, lc) in config.layers.iter().enumerate() {
        if h_prev[l].len() != lc.d_size || d_prev[l].len() != lc.d_size {
            return Err(Error::DimensionMismatch {
                op: "fm_step state",
                expected: lc.d_size,
                got: h_prev[l].len(),
            });
        }
        let drive = if l == 0 {
            net.input.matvec(u_t)?
        } else {
            vec![0.0; lc.d_size]
        };
        let mut hl = vec![0.0; lc.d_size];
        let mut dl = vec![0.0; lc.d_size];
        let above = (l + 1 < n).then(|| d_prev[l + 1].as_slice());
        layer_forward(&net.rec[l], lc.tau, &h_prev[l], &d_prev[l], above, &drive, &mut hl, &mut dl);
        h.push(hl);
        d.push(dl);
    }
    let mut x = net.output_bias.clone();
    net.output.matvec_acc(&d[0], &mut x);
    Ok((h, d, x))
}

/// Training inputs for one sequence: `u_0 = v̄_0`, then
/// `u_t = c·x_{t−1} + (1 − c)·v̄_t`. Output `x_t` predicts `v̄_{t+1}`.
pub fn fm_training_plan(target: &[f64], dim: usize, blend: f64) -> InputPlan {
    let steps = target.len() / dim - 1;
    let mut feedback = vec![blend; steps];
    feedback[0] = 0.0;
    let external = (0..steps * dim)
        .map(|k| if k < dim { target[k] } else { (1.0 - blend) * target[k] })
        .collect();
    InputPlan { feedback, external }
}

/// Teacher-forced inputs `u_t = v̄_t`.
pub fn fm_teacher_plan(target: &[f64], dim: usize) -> InputPlan {
    let steps = target.len() / dim - 1;
    InputPlan {
        feedback: vec![0.0; steps],
        external: target[..steps * dim].to_vec(),
    }
}

/// `(½ Σ ‖x_t − v̄_{t+1}‖², ∂/∂x)` for a forward-model trace.
pub fn fm_loss(x: &[f64], target: &[f64], dim: usize) -> (f64, Vec<f64>) {
    let next = &target[dim..];
    let g: Vec<f64> = x.iter().zip(next).map(|(a, b)| a - b).collect();
    (0.5 * g.iter().map(|e| e * e).sum::<f64>(), g)
}

fn sequence_grad(params: &FmParams, config: &BaselineConfig, target: &[f64]) -> Result<(f64, DrivenNet)> {
    let dim = config.model.output_dim;
    let plan = fm_training_plan(target, dim, config.blend);
    let tr = driven_rollout(&params.net, &config.model, None, &plan)?;
    let (loss, gx) = fm_loss(&tr.x, target, dim);
    // The fed-back part of each input is treated as data: the loss is a sum
    // of one-step predictions, not a closed-loop objective.
    let given = InputPlan {
        feedback: vec![0.0; plan.steps()],
        external: tr.u.clone(),
    };
    let g = driven_backward(&params.net, &config.model, &given, &tr, &gx, true)?;
    Ok((loss, g.net.expect("net gradients requested")))
}

pub fn train_fm(targets: &[Vec<f64>], config: &BaselineConfig, exec: Execution) -> Result<TrainedFm> {
    config.validate()?;
    let m = &config.model;
    super::check_targets(targets, m)?;
    let mut rng = SeededRng::new(domain_seed(m.seed, "fm-init"));
    let mut params = FmParams {
        net: DrivenNet::init(m, m.output_dim, &mut rng),
    };
    let mut adam: Vec<AdamState> = params
        .net
        .blocks()
        .iter()
        .map(|(name, b)| AdamState::for_rate(name.clone(), b.len(), m.lr))
        .collect();
    let mut history = Vec::with_capacity(m.epochs);
    for epoch in 0..m.epochs {
        let results = exec.map(targets.len(), |i| sequence_grad(&params, config, &targets[i]));
        let mut total = params.net.zeros_like();
        let mut loss = 0.0;
        for r in results {
            let (l, g) = r?;
            loss += l;
            total.add_assign(&g);
        }
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        history.push(loss);
        let mut grads = total.blocks_mut();
        if let Some(c) = config.clip_norm {
            clip_global_norm(&mut grads, c);
        }
        for ((state, p), g) in adam.iter_mut().zip(params.net.blocks_mut()).zip(grads) {
            state
                .step(p, g, m.lr)
                .map_err(|_| Error::Divergence { epoch, loss })?;
        }
    }
    Ok(TrainedFm {
        config: config.clone(),
        params,
        history,
    })
}
