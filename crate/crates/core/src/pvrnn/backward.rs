//! Reverse-mode gradients through a recorded [`ForwardTrace`].
//!
//! The loss differentiated here is
//! `Σ_t g_x(t)·x_t + Σ_t Σ_l w(t,l)·KL(q_t^l ‖ p_t^l)`, where `g_x` is the
//! caller-supplied output gradient. With `g_x = x − x̄` this is the
//! gradient of `−ELBO`; masking `g_x` gives error dropout and the planning
//! objective.

use super::cell::{layer_backward, tanh_leak_backward};
use super::config::ModelConfig;
use super::params::{AdaptationVars, NetworkParams};
use super::trace::{sigma_passes, ForwardTrace};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Gradients {
    /// `None` when weight gradients were not requested.
    pub params: Option<NetworkParams>,
    /// `None` when the trace had no posterior.
    pub adapt: Option<AdaptationVars>,
}

/// Backpropagates through `trace`. `output_grad` is `steps × out`.
pub fn backward(
    params: &NetworkParams,
    config: &ModelConfig,
    trace: &ForwardTrace,
    output_grad: &[f64],
    want_params: bool,
) -> Result<Gradients> {
    let layout = &trace.layout;
    let steps = trace.steps;
    let (dt, zt, out) = (layout.d_total, layout.z_total, layout.out);
    if output_grad.len() != steps * out {
        return Err(Error::DimensionMismatch {
            op: "backward output_grad",
            expected: steps * out,
            got: output_grad.len(),
        });
    }
    let n = config.layers.len();
    let cap = trace.sampling.sigma_cap;
    let mut gp = want_params.then(|| params.zeros_like());
    let mut ga = trace.has_posterior.then(|| AdaptationVars::zeros(steps, zt));

    // ∂L/∂d_t accumulated from later steps, and ∂L/∂h_{t+1}.
    let mut gd = vec![0.0; dt];
    let mut gh = vec![0.0; dt];
    let zero_d = vec![0.0; dt];
    let d0 = layout.d_range(0);

    for t in (0..steps).rev() {
        let d_t = &trace.d[t * dt..(t + 1) * dt];
        let d_prev_all = if t == 0 {
            &zero_d[..]
        } else {
            &trace.d[(t - 1) * dt..t * dt]
        };
        let gx = &output_grad[t * out..(t + 1) * out];
        params.output.matvec_t_acc(gx, &mut gd[d0.clone()]);
        if let Some(g) = gp.as_mut() {
            g.output.outer_acc(gx, &d_t[d0.clone()]);
            for (b, v) in g.output_bias.iter_mut().zip(gx) {
                *b += v;
            }
        }

        let mut gd_prev = vec![0.0; dt];
        for l in 0..n {
            let lc = &config.layers[l];
            let lp = &params.layers[l];
            let dr = layout.d_range(l);
            let zr = layout.z_range(l);
            tanh_leak_backward(&gd[dr.clone()], &d_t[dr.clone()], lc.tau, &mut gh[dr.clone()]);

            let above = (l + 1 < n).then(|| layout.d_range(l + 1));
            let d_above_prev = above.clone().map(|r| &d_prev_all[r]);
            let (gd_own, gd_above) = match &above {
                Some(r) => {
                    let (lo, hi) = gd_prev.split_at_mut(r.start);
                    (&mut lo[dr.clone()], Some(&mut hi[..r.len()]))
                }
                None => (&mut gd_prev[dr.clone()], None),
            };
            let gpre = layer_backward(
                &lp.rec,
                gp.as_mut().map(|g| &mut g.layers[l].rec),
                lc.tau,
                &gh[dr.clone()],
                &d_prev_all[dr.clone()],
                d_above_prev,
                gd_own,
                gd_above,
            );

            let zb = t * zt + zr.start;
            let zs = zb..zb + zr.len();
            let z = &trace.z[zs.clone()];
            let mut gz = vec![0.0; zr.len()];
            lp.w_zd.matvec_t_acc(&gpre, &mut gz);
            if let Some(g) = gp.as_mut() {
                g.layers[l].w_zd.outer_acc(&gpre, z);
            }

            let from_q = t < trace.sampling.posterior_steps;
            let w = config.kld_weight(t, l);
            let mut g_mu_p = vec![0.0; zr.len()];
            let mut g_sigma_p = vec![0.0; zr.len()];
            for i in 0..zr.len() {
                let k = zb + i;
                let (mq, sq) = (trace.mu_q[k], trace.sigma_q[k]);
                let (mp, sp) = (trace.mu_p[k], trace.sigma_p[k]);
                let eps = trace.eps[k];
                let (mut gmq, mut gsq) = (0.0, 0.0);
                if from_q {
                    gmq += gz[i];
                    gsq += gz[i] * eps;
                } else {
                    g_mu_p[i] += gz[i];
                    g_sigma_p[i] += gz[i] * eps;
                }
                if trace.has_posterior && w != 0.0 {
                    let dm = mp - mq;
                    let sp2 = sp * sp;
                    gmq += w * (-dm / sp2);
                    gsq += w * (-1.0 / sq + sq / sp2);
                    g_mu_p[i] += w * (dm / sp2);
                    g_sigma_p[i] += w * (1.0 / sp - (dm * dm + sq * sq) / (sp2 * sp));
                }
                if let Some(a) = ga.as_mut() {
                    a.mu[k] = gmq * (1.0 - mq * mq);
                    a.sigma[k] = if sigma_passes(sq, cap) { gsq * sq } else { 0.0 };
                }
            }

            if t > 0 {
                let d_prev = &d_prev_all[dr.clone()];
                let pre_mu: Vec<f64> = (0..zr.len())
                    .map(|i| g_mu_p[i] * (1.0 - trace.mu_p[zb + i].powi(2)))
                    .collect();
                let pre_sigma: Vec<f64> = (0..zr.len())
                    .map(|i| {
                        let sp = trace.sigma_p[zb + i];
                        if sigma_passes(sp, cap) {
                            g_sigma_p[i] * sp
                        } else {
                            0.0
                        }
                    })
                    .collect();
                lp.w_mu.matvec_t_acc(&pre_mu, &mut gd_prev[dr.clone()]);
                lp.w_sigma.matvec_t_acc(&pre_sigma, &mut gd_prev[dr.clone()]);
                if let Some(g) = gp.as_mut() {
                    g.layers[l].w_mu.outer_acc(&pre_mu, d_prev);
                    g.layers[l].w_sigma.outer_acc(&pre_sigma, d_prev);
                }
            }
        }
        gd = gd_prev;
    }
    Ok(Gradients {
        params: gp,
        adapt: ga,
    })
}
