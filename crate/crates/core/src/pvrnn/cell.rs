//! Leaky-integrator MTRNN layer shared by PV-RNN and the baselines.
//!
//! `h_t = (1 − 1/τ) h_{t−1} + (1/τ)(W_dd d_{t−1} + W_td d⁺_{t−1} + drive_t)`
//! and `d_t = tanh(h_t)`, where `d⁺` is the layer above and `drive` is the
//! model-specific input (latent, sensory or both).

use serde::{Deserialize, Serialize};

use crate::numeric::{Matrix, SeededRng};

/// Recurrent and top-down weights of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentWeights {
    pub w_dd: Matrix,
    /// From the layer above; `None` at the top layer.
    pub w_td: Option<Matrix>,
}

impl RecurrentWeights {
    pub fn init(d: usize, d_above: Option<usize>, rng: &mut SeededRng) -> Self {
        Self {
            w_dd: glorot(d, d, rng),
            w_td: d_above.map(|da| glorot(d, da, rng)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w_dd: Matrix::zeros(self.w_dd.rows(), self.w_dd.cols()),
            w_td: self.w_td.as_ref().map(|m| Matrix::zeros(m.rows(), m.cols())),
        }
    }
}

/// Uniform in ±√(6 / (fan_in + fan_out)).
pub fn glorot(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    if rows == 0 || cols == 0 {
        return Matrix::zeros(rows, cols);
    }
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(-limit, limit))
}

/// Forward step for one layer. `drive` is added inside the 1/τ term.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn layer_forward(
    weights: &RecurrentWeights,
    tau: f64,
    h_prev: &[f64],
    d_prev: &[f64],
    d_above_prev: Option<&[f64]>,
    drive: &[f64],
    h_out: &mut [f64],
    d_out: &mut [f64],
) {
    let n = h_out.len();
    let mut pre = drive.to_vec();
    debug_assert_eq!(pre.len(), n);
    weights.w_dd.matvec_acc(d_prev, &mut pre);
    if let (Some(w), Some(da)) = (&weights.w_td, d_above_prev) {
        w.matvec_acc(da, &mut pre);
    }
    let keep = 1.0 - 1.0 / tau;
    for i in 0..n {
        h_out[i] = keep * h_prev[i] + pre[i] / tau;
        d_out[i] = h_out[i].tanh();
    }
}

/// Backward step for one layer given `∂L/∂h_t`.
///
/// Accumulates weight gradients into `grads` (when given) and the
/// contributions to `∂L/∂d_{t−1}` of this layer and the layer above.
/// Returns `∂L/∂drive_t = ∂L/∂h_t / τ`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn layer_backward(
    weights: &RecurrentWeights,
    grads: Option<&mut RecurrentWeights>,
    tau: f64,
    gh: &[f64],
    d_prev: &[f64],
    d_above_prev: Option<&[f64]>,
    gd_prev: &mut [f64],
    gd_above_prev: Option<&mut [f64]>,
) -> Vec<f64> {
    let gpre: Vec<f64> = gh.iter().map(|g| g / tau).collect();
    if let Some(g) = grads {
        g.w_dd.outer_acc(&gpre, d_prev);
        if let (Some(gw), Some(da)) = (g.w_td.as_mut(), d_above_prev) {
            gw.outer_acc(&gpre, da);
        }
    }
    weights.w_dd.matvec_t_acc(&gpre, gd_prev);
    if let (Some(w), Some(gda)) = (&weights.w_td, gd_above_prev) {
        w.matvec_t_acc(&gpre, gda);
    }
    gpre
}

/// `∂L/∂h_t = ∂L/∂d_t ⊙ (1 − d_t²) + (1 − 1/τ) ∂L/∂h_{t+1}`, in place on
/// `gh_next` which holds `∂L/∂h_{t+1}` on entry.
#[inline]
pub fn tanh_leak_backward(gd: &[f64], d: &[f64], tau: f64, gh_next: &mut [f64]) {
    let keep = 1.0 - 1.0 / tau;
    for i in 0..gd.len() {
        gh_next[i] = gd[i] * (1.0 - d[i] * d[i]) + keep * gh_next[i];
    }
}
