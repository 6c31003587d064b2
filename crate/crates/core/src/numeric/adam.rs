use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;

/// Adam moment estimates for one parameter block.
///
/// `eps_hat` is the denominator stabiliser; the training and planning loops
/// set it to a tenth of the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    name: String,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamState {
    pub fn new(name: impl Into<String>, len: usize, eps_hat: f64) -> Self {
        Self {
            name: name.into(),
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps_hat,
        }
    }

    /// State for a block trained at `lr`, with `eps_hat = lr / 10`.
    pub fn for_rate(name: impl Into<String>, len: usize, lr: f64) -> Self {
        Self::new(name, len, lr / 10.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected Adam update of `param` in place.
    ///
    /// The gradient is validated before any state is touched, so a
    /// rejected step leaves both the state and the parameter unchanged.
    pub fn step(&mut self, param: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if param.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                op: "adam_step",
                expected: self.m.len(),
                got: if param.len() != self.m.len() {
                    param.len()
                } else {
                    grad.len()
                },
            });
        }
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {}", self.name)));
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in param
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps_hat);
        }
        Ok(())
    }
}

/// Functional form: returns the updated parameter and advances `state`.
pub fn adam_step(state: &mut AdamState, param: &[f64], grad: &[f64], lr: f64) -> Result<Vec<f64>> {
    let mut out = param.to_vec();
    state.step(&mut out, grad, lr)?;
    Ok(out)
}

/// Rescales `grads` in place so their joint Euclidean norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}
