//! Stochastic-initial-state MTRNN: Gaussian latents only at the first step,
//! one per deterministic unit, then deterministic dynamics driven by the
//! fed-back position.

use serde::{Deserialize, Serialize};

use super::driven::{driven_backward, driven_rollout, DrivenNet, DrivenTrace, InputPlan};
use super::BaselineConfig;
use crate::error::{Error, Result};
use crate::numeric::{clip_global_norm, domain_seed, AdamState, Matrix, SeededRng};
use crate::par::Execution;
use crate::pvrnn::{glorot, kld_unit, ModelConfig, SIGMA_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiParams {
    pub net: DrivenNet,
    /// Per layer `z → h` at the first step, `d × d`.
    pub w_zd: Vec<Matrix>,
}

impl SiParams {
    pub fn init(config: &ModelConfig, rng: &mut SeededRng) -> Self {
        let net = DrivenNet::init(config, config.output_dim, rng);
        let w_zd = config
            .layers
            .iter()
            .map(|l| glorot(l.d_size, l.d_size, rng))
            .collect();
        Self { net, w_zd }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            net: self.net.zeros_like(),
            w_zd: self.w_zd.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
        }
    }

    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = self.net.blocks();
        for (l, m) in self.w_zd.iter().enumerate() {
            out.push((format!("layer{l}.w_zd"), m.as_slice()));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.net.blocks_mut();
        for m in &mut self.w_zd {
            out.push(m.as_mut_slice());
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().into_iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        for b in self.blocks_mut() {
            let n = b.len();
            b.copy_from_slice(&flat[i..i + n]);
            i += n;
        }
    }

    pub fn add_assign(&mut self, other: &SiParams) {
        for (a, (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Raw first-step posterior `(A^μ, A^σ)`, layers concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiInit {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl SiInit {
    pub fn zeros(width: usize) -> Self {
        Self {
            mu: vec![0.0; width],
            sigma: vec![0.0; width],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.mu.iter().chain(&self.sigma).copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let n = self.mu.len();
        self.mu.copy_from_slice(&flat[..n]);
        self.sigma.copy_from_slice(&flat[n..]);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSi {
    pub config: BaselineConfig,
    pub params: SiParams,
    pub adaptation: Vec<SiInit>,
    /// Per epoch: `(squared-error loss, weighted KLD)` summed over sequences.
    pub history: Vec<(f64, f64)>,
}

/// Number of first-step latents: one per deterministic unit.
pub fn si_width(config: &ModelConfig) -> usize {
    config.layers.iter().map(|l| l.d_size).sum()
}

/// Inputs `u_0 = 0`, `u_t = f·x_{t−1} + g·v̄_{t−1}`.
pub fn si_plan(target: Option<&[f64]>, steps: usize, dim: usize, feedback: f64) -> InputPlan {
    let mut fb = vec![feedback; steps];
    fb[0] = 0.0;
    let mut external = vec![0.0; steps * dim];
    if let Some(v) = target {
        for t in 1..steps {
            for i in 0..dim {
                external[t * dim + i] = (1.0 - feedback) * v[(t - 1) * dim + i];
            }
        }
    }
    InputPlan {
        feedback: fb,
        external,
    }
}

/// Rollout record with the sampled first-step latents.
#[derive(Debug, Clone)]
pub struct SiTrace {
    pub inner: DrivenTrace,
    pub mu_q: Vec<f64>,
    pub sigma_q: Vec<f64>,
    pub z: Vec<f64>,
    pub eps: Vec<f64>,
}

impl SiTrace {
    /// Unweighted KLD of the first-step posterior against `N(0, I)`.
    pub fn kld(&self) -> f64 {
        self.mu_q
            .iter()
            .zip(&self.sigma_q)
            .map(|(&m, &s)| kld_unit(m, s, 0.0, 1.0))
            .sum()
    }
}

pub fn si_rollout(
    params: &SiParams,
    config: &ModelConfig,
    init: &SiInit,
    eps: &[f64],
    plan: &InputPlan,
) -> Result<SiTrace> {
    let width = si_width(config);
    if init.mu.len() != width || eps.len() != width {
        return Err(Error::DimensionMismatch {
            op: "si initial state",
            expected: width,
            got: init.mu.len().min(eps.len()),
        });
    }
    let mu_q: Vec<f64> = init.mu.iter().map(|a| a.tanh()).collect();
    let sigma_q: Vec<f64> = init.sigma.iter().map(|a| a.exp().max(SIGMA_FLOOR)).collect();
    let z: Vec<f64> = (0..width).map(|i| mu_q[i] + sigma_q[i] * eps[i]).collect();
    let mut drive = Vec::with_capacity(config.layers.len());
    let mut off = 0;
    for (l, lc) in config.layers.iter().enumerate() {
        drive.push(params.w_zd[l].matvec(&z[off..off + lc.d_size])?);
        off += lc.d_size;
    }
    let inner = driven_rollout(&params.net, config, Some(&drive), plan)?;
    Ok(SiTrace {
        inner,
        mu_q,
        sigma_q,
        z,
        eps: eps.to_vec(),
    })
}

/// Gradients of `Σ g_x·x + w_I·KLD(q(z₁) ‖ N(0, I))`.
pub fn si_backward(
    params: &SiParams,
    config: &ModelConfig,
    plan: &InputPlan,
    trace: &SiTrace,
    output_grad: &[f64],
    want_params: bool,
) -> Result<(Option<SiParams>, SiInit)> {
    let g = driven_backward(&params.net, config, plan, &trace.inner, output_grad, want_params)?;
    let width = si_width(config);
    let mut gz = vec![0.0; width];
    let mut gp = g.net.map(|net| SiParams {
        net,
        w_zd: params.w_zd.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
    });
    let mut off = 0;
    for (l, lc) in config.layers.iter().enumerate() {
        let r = off..off + lc.d_size;
        params.w_zd[l].matvec_t_acc(&g.init_drive[l], &mut gz[r.clone()]);
        if let Some(p) = gp.as_mut() {
            p.w_zd[l].outer_acc(&g.init_drive[l], &trace.z[r.clone()]);
        }
        off += lc.d_size;
    }
    let w = config.w_init;
    let mut ga = SiInit::zeros(width);
    for i in 0..width {
        let (m, s) = (trace.mu_q[i], trace.sigma_q[i]);
        let gm = gz[i] + w * m;
        let gs = gz[i] * trace.eps[i] + w * (s - 1.0 / s);
        ga.mu[i] = gm * (1.0 - m * m);
        ga.sigma[i] = if s > SIGMA_FLOOR { gs * s } else { 0.0 };
    }
    Ok((gp, ga))
}

/// `(½ Σ_t ‖x_t − v̄_t‖², x − v̄)`.
pub fn si_loss(x: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let g: Vec<f64> = x.iter().zip(target).map(|(a, b)| a - b).collect();
    (0.5 * g.iter().map(|e| e * e).sum::<f64>(), g)
}

pub fn train_si(targets: &[Vec<f64>], config: &BaselineConfig, exec: Execution) -> Result<TrainedSi> {
    config.validate()?;
    let m = &config.model;
    super::check_targets(targets, m)?;
    let width = si_width(m);
    let dim = m.output_dim;
    let mut params = SiParams::init(m, &mut SeededRng::new(domain_seed(m.seed, "si-init")));
    let mut adaptation = vec![SiInit::zeros(width); targets.len()];
    let mut adam_w: Vec<AdamState> = params
        .blocks()
        .iter()
        .map(|(name, b)| AdamState::for_rate(name.clone(), b.len(), m.lr))
        .collect();
    let mut adam_a: Vec<AdamState> = (0..targets.len())
        .map(|i| AdamState::for_rate(format!("A1[{i}]"), 2 * width, m.lr))
        .collect();
    let noise_seed = domain_seed(m.seed, "si-train");
    let n = targets.len();
    let mut history = Vec::with_capacity(m.epochs);

    for epoch in 0..m.epochs {
        let results = exec.map(n, |i| -> Result<_> {
            let mut rng = SeededRng::derived(noise_seed, (epoch * n + i) as u64);
            let mut eps = vec![0.0; width];
            rng.fill_standard_normal(&mut eps);
            let plan = si_plan(Some(&targets[i]), m.seq_len, dim, config.blend);
            let tr = si_rollout(&params, m, &adaptation[i], &eps, &plan)?;
            let (loss, gx) = si_loss(&tr.inner.x, &targets[i]);
            let kld = m.w_init * tr.kld();
            let (gp, ga) = si_backward(&params, m, &plan, &tr, &gx, true)?;
            Ok((loss, kld, gp.expect("weight gradients requested"), ga))
        });
        let mut total = params.zeros_like();
        let (mut loss, mut kld) = (0.0, 0.0);
        let mut a_grads = Vec::with_capacity(n);
        for r in results {
            let (l, k, gp, ga) = r?;
            loss += l;
            kld += k;
            total.add_assign(&gp);
            a_grads.push(ga);
        }
        if !(loss + kld).is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: loss + kld,
            });
        }
        history.push((loss, kld));
        let diverged = |_| Error::Divergence {
            epoch,
            loss: loss + kld,
        };
        // One global norm over weights and every initial-state block.
        let mut a_flat: Vec<Vec<f64>> = a_grads.iter().map(SiInit::flatten).collect();
        {
            let mut all: Vec<&mut [f64]> = total.blocks_mut();
            all.extend(a_flat.iter_mut().map(|v| v.as_mut_slice()));
            if let Some(c) = config.clip_norm {
                clip_global_norm(&mut all, c);
            }
        }
        for ((state, p), (_, g)) in adam_w.iter_mut().zip(params.blocks_mut()).zip(total.blocks()) {
            state.step(p, g, m.lr).map_err(diverged)?;
        }
        for ((state, a), g) in adam_a.iter_mut().zip(adaptation.iter_mut()).zip(&a_flat) {
            let mut flat = a.flatten();
            state.step(&mut flat, g, m.lr).map_err(diverged)?;
            a.set_flat(&flat);
        }
    }
    Ok(TrainedSi {
        config: config.clone(),
        params,
        adaptation,
        history,
    })
}
