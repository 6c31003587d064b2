use super::cell::layer_forward;
use super::config::{Layout, ModelConfig, SIGMA_FLOOR};
use super::model::kld_unit;
use super::params::{AdaptationVars, NetworkParams};
use crate::error::{Error, Result};
use crate::numeric::SeededRng;

/// Standard-normal draws for every latent unit of every step.
///
/// Drawing the noise up front makes a rollout a pure function of
/// `(params, A, noise)` and lets the backward pass replay the same path.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTable {
    pub steps: usize,
    pub width: usize,
    pub eps: Vec<f64>,
}

impl NoiseTable {
    pub fn sample(rng: &mut SeededRng, steps: usize, width: usize) -> Self {
        let mut eps = vec![0.0; steps * width];
        rng.fill_standard_normal(&mut eps);
        Self { steps, width, eps }
    }

    pub fn zeros(steps: usize, width: usize) -> Self {
        Self {
            steps,
            width,
            eps: vec![0.0; steps * width],
        }
    }

    #[inline]
    pub fn at(&self, t: usize) -> &[f64] {
        &self.eps[t * self.width..(t + 1) * self.width]
    }

    pub fn at_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.eps[t * self.width..(t + 1) * self.width]
    }
}

/// Which distributions source `z` during a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    /// Steps `t < posterior_steps` sample from q, later steps from p.
    pub posterior_steps: usize,
    /// Upper clamp on every σ. `f64::INFINITY` in normal use; a tiny value
    /// makes the rollout effectively noise-free.
    pub sigma_cap: f64,
}

impl Sampling {
    pub fn prior() -> Self {
        Self {
            posterior_steps: 0,
            sigma_cap: f64::INFINITY,
        }
    }

    pub fn posterior(steps: usize) -> Self {
        Self {
            posterior_steps: steps,
            sigma_cap: f64::INFINITY,
        }
    }

    pub fn with_sigma_cap(mut self, cap: f64) -> Self {
        self.sigma_cap = cap;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZSource {
    Prior,
    Posterior,
}

/// Every intermediate quantity of one rollout, flattened as `steps × width`.
///
/// When no adaptation variables are supplied, the recorded posterior is a
/// copy of the prior, so the step KLD is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layout: Layout,
    pub steps: usize,
    pub sampling: Sampling,
    /// False when the rollout had no adaptation variables.
    pub has_posterior: bool,
    pub h: Vec<f64>,
    pub d: Vec<f64>,
    pub z: Vec<f64>,
    pub eps: Vec<f64>,
    pub mu_p: Vec<f64>,
    pub sigma_p: Vec<f64>,
    pub mu_q: Vec<f64>,
    pub sigma_q: Vec<f64>,
    pub x: Vec<f64>,
}

impl ForwardTrace {
    fn empty(layout: Layout, steps: usize, sampling: Sampling, has_posterior: bool) -> Self {
        let (dt, zt, o) = (layout.d_total, layout.z_total, layout.out);
        Self {
            steps,
            sampling,
            has_posterior,
            h: vec![0.0; steps * dt],
            d: vec![0.0; steps * dt],
            z: vec![0.0; steps * zt],
            eps: vec![0.0; steps * zt],
            mu_p: vec![0.0; steps * zt],
            sigma_p: vec![0.0; steps * zt],
            mu_q: vec![0.0; steps * zt],
            sigma_q: vec![0.0; steps * zt],
            x: vec![0.0; steps * o],
            layout,
        }
    }

    #[inline]
    pub fn d_at(&self, t: usize, l: usize) -> &[f64] {
        let base = t * self.layout.d_total;
        let r = self.layout.d_range(l);
        &self.d[base + r.start..base + r.end]
    }

    #[inline]
    pub fn h_at(&self, t: usize, l: usize) -> &[f64] {
        let base = t * self.layout.d_total;
        let r = self.layout.d_range(l);
        &self.h[base + r.start..base + r.end]
    }

    /// Slice of a `steps × z_total` field for step `t`, layer `l`.
    #[inline]
    pub fn z_field<'a>(&self, field: &'a [f64], t: usize, l: usize) -> &'a [f64] {
        let base = t * self.layout.z_total;
        let r = self.layout.z_range(l);
        &field[base + r.start..base + r.end]
    }

    #[inline]
    pub fn x_at(&self, t: usize) -> &[f64] {
        &self.x[t * self.layout.out..(t + 1) * self.layout.out]
    }

    pub fn source(&self, t: usize) -> ZSource {
        if t < self.sampling.posterior_steps {
            ZSource::Posterior
        } else {
            ZSource::Prior
        }
    }

    /// Unweighted `KL(q ‖ p)` of layer `l` at step `t`.
    pub fn kld_at(&self, t: usize, l: usize) -> f64 {
        let mq = self.z_field(&self.mu_q, t, l);
        let sq = self.z_field(&self.sigma_q, t, l);
        let mp = self.z_field(&self.mu_p, t, l);
        let sp = self.z_field(&self.sigma_p, t, l);
        (0..mq.len()).map(|i| kld_unit(mq[i], sq[i], mp[i], sp[i])).sum()
    }

    /// Positions as `steps × out`.
    pub fn outputs(&self) -> &[f64] {
        &self.x
    }

    pub fn d_in_open_interval(&self) -> bool {
        self.d.iter().all(|v| v.abs() < 1.0)
    }
}

#[inline]
fn clamp_sigma(raw: f64, cap: f64) -> f64 {
    raw.exp().max(SIGMA_FLOOR).min(cap)
}

/// True where σ = exp(a) was not clamped, so `∂σ/∂a = σ`.
#[inline]
pub(crate) fn sigma_passes(sigma: f64, cap: f64) -> bool {
    sigma > SIGMA_FLOOR && sigma < cap
}

/// Rolls the generative model forward for `noise.steps` steps.
pub fn rollout(
    params: &NetworkParams,
    config: &ModelConfig,
    adapt: Option<&AdaptationVars>,
    noise: &NoiseTable,
    sampling: Sampling,
) -> Result<ForwardTrace> {
    let layout = config.layout();
    let steps = noise.steps;
    if noise.width != layout.z_total {
        return Err(Error::DimensionMismatch {
            op: "rollout noise width",
            expected: layout.z_total,
            got: noise.width,
        });
    }
    if !params.matches(config) {
        return Err(Error::Config("network parameters do not match the model config".into()));
    }
    if let Some(a) = adapt {
        if a.steps != steps {
            return Err(Error::DimensionMismatch {
                op: "rollout adaptation steps",
                expected: steps,
                got: a.steps,
            });
        }
        if a.width != layout.z_total {
            return Err(Error::DimensionMismatch {
                op: "rollout adaptation width",
                expected: layout.z_total,
                got: a.width,
            });
        }
    } else if sampling.posterior_steps > 0 {
        return Err(Error::Config("posterior sampling requires adaptation variables".into()));
    }
    if sampling.posterior_steps > steps {
        return Err(Error::DimensionMismatch {
            op: "rollout posterior steps",
            expected: steps,
            got: sampling.posterior_steps,
        });
    }

    let mut tr = ForwardTrace::empty(layout.clone(), steps, sampling, adapt.is_some());
    let n = config.layers.len();
    let (dt, zt, out) = (layout.d_total, layout.z_total, layout.out);
    let zero_d = vec![0.0; dt];
    let cap = sampling.sigma_cap;

    for t in 0..steps {
        let zb = t * zt;
        tr.eps[zb..zb + zt].copy_from_slice(noise.at(t));
        for (l, lp) in params.layers.iter().enumerate() {
            let zr = layout.z_range(l);
            let dr = layout.d_range(l);
            for i in 0..zr.len() {
                let k = zb + zr.start + i;
                if t == 0 {
                    tr.mu_p[k] = 0.0;
                    tr.sigma_p[k] = 1.0_f64.min(cap);
                } else {
                    let d_prev = &tr.d[(t - 1) * dt + dr.start..(t - 1) * dt + dr.end];
                    let row = |m: &crate::numeric::Matrix| {
                        crate::numeric::dot(&m.as_slice()[i * m.cols()..(i + 1) * m.cols()], d_prev)
                    };
                    tr.mu_p[k] = row(&lp.w_mu).tanh();
                    tr.sigma_p[k] = clamp_sigma(row(&lp.w_sigma), cap);
                }
                match adapt {
                    Some(a) => {
                        tr.mu_q[k] = a.mu[t * zt + zr.start + i].tanh();
                        tr.sigma_q[k] = clamp_sigma(a.sigma[t * zt + zr.start + i], cap);
                    }
                    None => {
                        tr.mu_q[k] = tr.mu_p[k];
                        tr.sigma_q[k] = tr.sigma_p[k];
                    }
                }
                tr.z[k] = if t < sampling.posterior_steps {
                    tr.mu_q[k] + tr.sigma_q[k] * tr.eps[k]
                } else {
                    tr.mu_p[k] + tr.sigma_p[k] * tr.eps[k]
                };
            }
        }
        for (l, lp) in params.layers.iter().enumerate() {
            let lc = &config.layers[l];
            let dr = layout.d_range(l);
            let zr = layout.z_range(l);
            let mut drive = vec![0.0; lc.d_size];
            lp.w_zd.matvec_acc(&tr.z[zb + zr.start..zb + zr.end], &mut drive);
            let (h_prev, d_prev_all) = if t == 0 {
                (&zero_d[..], &zero_d[..])
            } else {
                (&tr.h[(t - 1) * dt..t * dt], &tr.d[(t - 1) * dt..t * dt])
            };
            let h_prev = h_prev[dr.clone()].to_vec();
            let d_prev = d_prev_all[dr.clone()].to_vec();
            let above = (l + 1 < n).then(|| d_prev_all[layout.d_range(l + 1)].to_vec());
            let mut h_out = vec![0.0; lc.d_size];
            let mut d_out = vec![0.0; lc.d_size];
            layer_forward(
                &lp.rec,
                lc.tau,
                &h_prev,
                &d_prev,
                above.as_deref(),
                &drive,
                &mut h_out,
                &mut d_out,
            );
            tr.h[t * dt + dr.start..t * dt + dr.end].copy_from_slice(&h_out);
            tr.d[t * dt + dr.start..t * dt + dr.end].copy_from_slice(&d_out);
        }
        let d0 = &tr.d[t * dt + layout.d_range(0).start..t * dt + layout.d_range(0).end];
        let mut x = params.output_bias.clone();
        params.output.matvec_acc(d0, &mut x);
        tr.x[t * out..(t + 1) * out].copy_from_slice(&x);
    }
    Ok(tr)
}
