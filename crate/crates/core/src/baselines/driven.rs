//! Input-driven MTRNN shared by the forward-model and stochastic-initial-state
//! baselines.
//!
//! The bottom layer receives `U·u_t` each step, where the input is
//! `u_t = a_t · x_{t−1} + b_t`: `a_t` feeds the network's own previous
//! output back in (closed loop) and `b_t` carries external data. Each layer
//! may also receive a one-off drive at the first step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, SeededRng};
use crate::pvrnn::{glorot, layer_backward, layer_forward, tanh_leak_backward, ModelConfig, RecurrentWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivenNet {
    pub rec: Vec<RecurrentWeights>,
    /// `u → h₀`, `d₀ × in`.
    pub input: Matrix,
    pub output: Matrix,
    pub output_bias: Vec<f64>,
}

impl DrivenNet {
    pub fn init(config: &ModelConfig, input_dim: usize, rng: &mut SeededRng) -> Self {
        let n = config.layers.len();
        let rec = (0..n)
            .map(|l| {
                let above = (l + 1 < n).then(|| config.layers[l + 1].d_size);
                RecurrentWeights::init(config.layers[l].d_size, above, rng)
            })
            .collect();
        let d0 = config.layers[0].d_size;
        Self {
            rec,
            input: glorot(d0, input_dim, rng),
            output: glorot(config.output_dim, d0, rng),
            output_bias: vec![0.0; config.output_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            rec: self.rec.iter().map(RecurrentWeights::zeros_like).collect(),
            input: Matrix::zeros(self.input.rows(), self.input.cols()),
            output: Matrix::zeros(self.output.rows(), self.output.cols()),
            output_bias: vec![0.0; self.output_bias.len()],
        }
    }

    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (l, r) in self.rec.iter().enumerate() {
            out.push((format!("layer{l}.w_dd"), r.w_dd.as_slice()));
            if let Some(w) = &r.w_td {
                out.push((format!("layer{l}.w_td"), w.as_slice()));
            }
        }
        out.push(("input.w".into(), self.input.as_slice()));
        out.push(("output.w".into(), self.output.as_slice()));
        out.push(("output.b".into(), &self.output_bias));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for r in &mut self.rec {
            out.push(r.w_dd.as_mut_slice());
            if let Some(w) = &mut r.w_td {
                out.push(w.as_mut_slice());
            }
        }
        out.push(self.input.as_mut_slice());
        out.push(self.output.as_mut_slice());
        out.push(&mut self.output_bias);
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

    pub fn add_assign(&mut self, other: &DrivenNet) {
        for (a, (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|x| x.is_finite()))
    }

    pub fn input_dim(&self) -> usize {
        self.input.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.output.rows()
    }
}

/// Per-step input recipe: `u_t = feedback[t] · x_{t−1} + external[t]`.
/// `feedback[0]` must be 0.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPlan {
    pub feedback: Vec<f64>,
    /// `steps × in`.
    pub external: Vec<f64>,
}

impl InputPlan {
    pub fn steps(&self) -> usize {
        self.feedback.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrivenTrace {
    pub steps: usize,
    pub d_total: usize,
    pub h: Vec<f64>,
    pub d: Vec<f64>,
    pub u: Vec<f64>,
    /// `steps × out`.
    pub x: Vec<f64>,
}

impl DrivenTrace {
    pub fn x_at(&self, t: usize) -> &[f64] {
        let o = self.x.len() / self.steps.max(1);
        &self.x[t * o..(t + 1) * o]
    }
}

fn offsets(config: &ModelConfig) -> Vec<usize> {
    let mut off = vec![0];
    for l in &config.layers {
        off.push(off.last().unwrap() + l.d_size);
    }
    off
}

/// Rolls the network over `plan.steps()` steps. `init_drive[l]` is added to
/// layer `l` at the first step only.
pub fn driven_rollout(
    net: &DrivenNet,
    config: &ModelConfig,
    init_drive: Option<&[Vec<f64>]>,
    plan: &InputPlan,
) -> Result<DrivenTrace> {
    let steps = plan.steps();
    let (ind, out) = (net.input_dim(), net.output_dim());
    if plan.external.len() != steps * ind {
        return Err(Error::DimensionMismatch {
            op: "driven input plan",
            expected: steps * ind,
            got: plan.external.len(),
        });
    }
    if plan.feedback.first().is_some_and(|&a| a != 0.0) {
        return Err(Error::Config("the first step has no previous output to feed back".into()));
    }
    if plan.feedback.iter().any(|&a| a != 0.0) && ind != out {
        return Err(Error::Config("output feedback requires input_dim == output_dim".into()));
    }
    let n = config.layers.len();
    let off = offsets(config);
    let dt = off[n];
    let mut tr = DrivenTrace {
        steps,
        d_total: dt,
        h: vec![0.0; steps * dt],
        d: vec![0.0; steps * dt],
        u: vec![0.0; steps * ind],
        x: vec![0.0; steps * out],
    };
    let zero = vec![0.0; dt];
    for t in 0..steps {
        for i in 0..ind {
            let fb = if t > 0 && plan.feedback[t] != 0.0 {
                plan.feedback[t] * tr.x[(t - 1) * out + i]
            } else {
                0.0
            };
            tr.u[t * ind + i] = fb + plan.external[t * ind + i];
        }
        let (h_prev, d_prev) = if t == 0 {
            (zero.clone(), zero.clone())
        } else {
            (tr.h[(t - 1) * dt..t * dt].to_vec(), tr.d[(t - 1) * dt..t * dt].to_vec())
        };
        for l in 0..n {
            let lc = &config.layers[l];
            let r = off[l]..off[l + 1];
            let mut drive = vec![0.0; lc.d_size];
            if l == 0 {
                net.input.matvec_acc(&tr.u[t * ind..(t + 1) * ind], &mut drive);
            }
            if t == 0 {
                if let Some(init) = init_drive {
                    for (a, b) in drive.iter_mut().zip(&init[l]) {
                        *a += b;
                    }
                }
            }
            let above = (l + 1 < n).then(|| &d_prev[off[l + 1]..off[l + 2]]);
            let mut h_out = vec![0.0; lc.d_size];
            let mut d_out = vec![0.0; lc.d_size];
            layer_forward(&net.rec[l], lc.tau, &h_prev[r.clone()], &d_prev[r.clone()], above, &drive, &mut h_out, &mut d_out);
            tr.h[t * dt + r.start..t * dt + r.end].copy_from_slice(&h_out);
            tr.d[t * dt + r.start..t * dt + r.end].copy_from_slice(&d_out);
        }
        let mut x = net.output_bias.clone();
        net.output.matvec_acc(&tr.d[t * dt..t * dt + off[1]], &mut x);
        tr.x[t * out..(t + 1) * out].copy_from_slice(&x);
    }
    Ok(tr)
}

#[derive(Debug, Clone)]
pub struct DrivenGradients {
    pub net: Option<DrivenNet>,
    /// Per layer, gradient of the first-step drive.
    pub init_drive: Vec<Vec<f64>>,
    /// `steps × in`, gradient of `plan.external`.
    pub external: Vec<f64>,
}

/// Backpropagates `output_grad` (`steps × out`) through a driven rollout,
/// including through the output feedback loop.
pub fn driven_backward(
    net: &DrivenNet,
    config: &ModelConfig,
    plan: &InputPlan,
    trace: &DrivenTrace,
    output_grad: &[f64],
    want_net: bool,
) -> Result<DrivenGradients> {
    let steps = trace.steps;
    let (ind, out) = (net.input_dim(), net.output_dim());
    if output_grad.len() != steps * out {
        return Err(Error::DimensionMismatch {
            op: "driven output_grad",
            expected: steps * out,
            got: output_grad.len(),
        });
    }
    let n = config.layers.len();
    let off = offsets(config);
    let dt = off[n];
    let mut gn = want_net.then(|| net.zeros_like());
    let mut g_init: Vec<Vec<f64>> = config.layers.iter().map(|l| vec![0.0; l.d_size]).collect();
    let mut g_ext = vec![0.0; steps * ind];
    let mut gd = vec![0.0; dt];
    let mut gh = vec![0.0; dt];
    // ∂L/∂x_t arriving through the feedback of step t + 1.
    let mut gx_fb = vec![0.0; out];
    let zero = vec![0.0; dt];

    for t in (0..steps).rev() {
        let d_t = &trace.d[t * dt..(t + 1) * dt];
        let d_prev = if t == 0 { &zero[..] } else { &trace.d[(t - 1) * dt..t * dt] };
        let gx: Vec<f64> = (0..out).map(|i| output_grad[t * out + i] + gx_fb[i]).collect();
        net.output.matvec_t_acc(&gx, &mut gd[..off[1]]);
        if let Some(g) = gn.as_mut() {
            g.output.outer_acc(&gx, &d_t[..off[1]]);
            for (b, v) in g.output_bias.iter_mut().zip(&gx) {
                *b += v;
            }
        }
        let mut gd_prev = vec![0.0; dt];
        for l in 0..n {
            let lc = &config.layers[l];
            let r = off[l]..off[l + 1];
            tanh_leak_backward(&gd[r.clone()], &d_t[r.clone()], lc.tau, &mut gh[r.clone()]);
            let above = (l + 1 < n).then(|| off[l + 1]..off[l + 2]);
            let (gd_own, gd_above) = match &above {
                Some(a) => {
                    let (lo, hi) = gd_prev.split_at_mut(a.start);
                    (&mut lo[r.clone()], Some(&mut hi[..a.len()]))
                }
                None => (&mut gd_prev[r.clone()], None),
            };
            let gpre = layer_backward(
                &net.rec[l],
                gn.as_mut().map(|g| &mut g.rec[l]),
                lc.tau,
                &gh[r.clone()],
                &d_prev[r.clone()],
                above.clone().map(|a| &d_prev[a]),
                gd_own,
                gd_above,
            );
            if t == 0 {
                for (a, b) in g_init[l].iter_mut().zip(&gpre) {
                    *a += b;
                }
            }
            if l == 0 {
                let mut gu = vec![0.0; ind];
                net.input.matvec_t_acc(&gpre, &mut gu);
                if let Some(g) = gn.as_mut() {
                    g.input.outer_acc(&gpre, &trace.u[t * ind..(t + 1) * ind]);
                }
                g_ext[t * ind..(t + 1) * ind].copy_from_slice(&gu);
                gx_fb = vec![0.0; out];
                if t > 0 && plan.feedback[t] != 0.0 {
                    for i in 0..ind {
                        gx_fb[i] = plan.feedback[t] * gu[i];
                    }
                }
            }
        }
        gd = gd_prev;
    }
    Ok(DrivenGradients {
        net: gn,
        init_drive: g_init,
        external: g_ext,
    })
}
