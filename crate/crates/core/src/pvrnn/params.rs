use serde::{Deserialize, Serialize};

use super::cell::{glorot, RecurrentWeights};
use super::config::{Layout, ModelConfig};
use crate::numeric::{Matrix, SeededRng};

/// Weights of one PV-RNN layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub rec: RecurrentWeights,
    /// z → h, `d × z`.
    pub w_zd: Matrix,
    /// d_{t−1} → prior mean pre-activation, `z × d`.
    pub w_mu: Matrix,
    /// d_{t−1} → prior log-σ, `z × d`.
    pub w_sigma: Matrix,
}

/// All trainable network weights. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
    /// Bottom-layer d → x, `out × d₀`.
    pub output: Matrix,
    pub output_bias: Vec<f64>,
}

impl NetworkParams {
    /// Glorot-uniform weights, zero output bias.
    pub fn init(config: &ModelConfig, rng: &mut SeededRng) -> Self {
        let n = config.layers.len();
        let layers = (0..n)
            .map(|l| {
                let lc = &config.layers[l];
                let above = (l + 1 < n).then(|| config.layers[l + 1].d_size);
                LayerParams {
                    rec: RecurrentWeights::init(lc.d_size, above, rng),
                    w_zd: glorot(lc.d_size, lc.z_size, rng),
                    w_mu: glorot(lc.z_size, lc.d_size, rng),
                    w_sigma: glorot(lc.z_size, lc.d_size, rng),
                }
            })
            .collect();
        Self {
            layers,
            output: glorot(config.output_dim, config.layers[0].d_size, rng),
            output_bias: vec![0.0; config.output_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    rec: l.rec.zeros_like(),
                    w_zd: z(&l.w_zd),
                    w_mu: z(&l.w_mu),
                    w_sigma: z(&l.w_sigma),
                })
                .collect(),
            output: z(&self.output),
            output_bias: vec![0.0; self.output_bias.len()],
        }
    }

    /// Named parameter blocks in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w_dd"), layer.rec.w_dd.as_slice()));
            if let Some(w) = &layer.rec.w_td {
                out.push((format!("layer{l}.w_td"), w.as_slice()));
            }
            out.push((format!("layer{l}.w_zd"), layer.w_zd.as_slice()));
            out.push((format!("layer{l}.w_mu"), layer.w_mu.as_slice()));
            out.push((format!("layer{l}.w_sigma"), layer.w_sigma.as_slice()));
        }
        out.push(("output.w".into(), self.output.as_slice()));
        out.push(("output.b".into(), &self.output_bias));
        out
    }

    /// Mutable blocks in the same order as [`NetworkParams::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.rec.w_dd.as_mut_slice());
            if let Some(w) = &mut layer.rec.w_td {
                out.push(w.as_mut_slice());
            }
            out.push(layer.w_zd.as_mut_slice());
            out.push(layer.w_mu.as_mut_slice());
            out.push(layer.w_sigma.as_mut_slice());
        }
        out.push(self.output.as_mut_slice());
        out.push(&mut self.output_bias);
        out
    }

    pub fn add_assign(&mut self, other: &NetworkParams) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b.1) {
                *x += y;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().into_iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        for block in self.blocks_mut() {
            let n = block.len();
            block.copy_from_slice(&flat[i..i + n]);
            i += n;
        }
        debug_assert_eq!(i, flat.len());
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|x| x.is_finite()))
    }

    /// Checks every matrix shape against `config`.
    pub fn matches(&self, config: &ModelConfig) -> bool {
        let n = config.layers.len();
        if self.layers.len() != n
            || self.output.rows() != config.output_dim
            || self.output.cols() != config.layers[0].d_size
            || self.output_bias.len() != config.output_dim
        {
            return false;
        }
        self.layers.iter().enumerate().all(|(l, p)| {
            let c = &config.layers[l];
            let shape = |m: &Matrix, r, k| m.rows() == r && m.cols() == k;
            let td_ok = match (&p.rec.w_td, config.layers.get(l + 1)) {
                (Some(m), Some(a)) => shape(m, c.d_size, a.d_size),
                (None, None) => true,
                _ => false,
            };
            td_ok
                && shape(&p.rec.w_dd, c.d_size, c.d_size)
                && shape(&p.w_zd, c.d_size, c.z_size)
                && shape(&p.w_mu, c.z_size, c.d_size)
                && shape(&p.w_sigma, c.z_size, c.d_size)
        })
    }
}

/// Raw posterior parameters `A^μ`, `A^σ` for one sequence, flattened as
/// `steps × z_total` with layers concatenated bottom first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationVars {
    pub steps: usize,
    pub width: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl AdaptationVars {
    pub fn zeros(steps: usize, width: usize) -> Self {
        Self {
            steps,
            width,
            mu: vec![0.0; steps * width],
            sigma: vec![0.0; steps * width],
        }
    }

    pub fn for_config(config: &ModelConfig) -> Self {
        Self::zeros(config.seq_len, Layout::new(config).z_total)
    }

    #[inline]
    pub fn mu_at(&self, t: usize) -> &[f64] {
        &self.mu[t * self.width..(t + 1) * self.width]
    }

    #[inline]
    pub fn sigma_at(&self, t: usize) -> &[f64] {
        &self.sigma[t * self.width..(t + 1) * self.width]
    }

    /// First `steps` rows, zero-padded if `steps` exceeds the stored length.
    pub fn resized(&self, steps: usize) -> Self {
        let mut out = Self::zeros(steps, self.width);
        let n = steps.min(self.steps) * self.width;
        out.mu[..n].copy_from_slice(&self.mu[..n]);
        out.sigma[..n].copy_from_slice(&self.sigma[..n]);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().chain(&self.sigma).all(|x| x.is_finite())
    }

    /// `[mu..., sigma...]`
    pub fn flatten(&self) -> Vec<f64> {
        self.mu.iter().chain(&self.sigma).copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let n = self.mu.len();
        self.mu.copy_from_slice(&flat[..n]);
        self.sigma.copy_from_slice(&flat[n..]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pvrnn::MetaPrior;

    #[test]
    fn init_shapes_and_bounds() {
        let cfg = ModelConfig::experiment1(MetaPrior::Intermediate);
        let p = NetworkParams::init(&cfg, &mut SeededRng::new(3));
        assert!(p.matches(&cfg));
        assert!(p.layers[1].rec.w_td.is_none());
        let limit = (6.0f64 / 40.0).sqrt();
        assert!(p.layers[0].rec.w_dd.as_slice().iter().all(|x| x.abs() <= limit));
        assert_eq!(p.output_bias, vec![0.0, 0.0]);
    }

    #[test]
    fn flatten_roundtrip() {
        let cfg = ModelConfig::experiment1(MetaPrior::Weak);
        let p = NetworkParams::init(&cfg, &mut SeededRng::new(1));
        let mut q = p.zeros_like();
        q.set_flat(&p.flatten());
        assert_eq!(p, q);
        assert_eq!(p.num_params(), p.flatten().len());
    }
}
