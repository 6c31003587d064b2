use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to every `exp`-parameterised standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// One MTRNN layer. Layer 0 is the bottom (fastest) layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub d_size: usize,
    pub z_size: usize,
    pub tau: f64,
    /// Meta-prior weighting this layer's KLD for steps after the first.
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: Vec<LayerConfig>,
    /// Weight of the first-step KLD against the unit Gaussian.
    pub w_init: f64,
    pub output_dim: usize,
    pub seq_len: usize,
    pub lr: f64,
    pub epochs: usize,
    pub error_dropout: f64,
    pub seed: u64,
}

/// The three meta-prior settings of the 2D experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetaPrior {
    Weak,
    Intermediate,
    Strong,
}

impl MetaPrior {
    pub const ALL: [MetaPrior; 3] = [MetaPrior::Weak, MetaPrior::Intermediate, MetaPrior::Strong];

    /// Per-layer weights, bottom layer first.
    pub fn weights(self) -> [f64; 2] {
        match self {
            MetaPrior::Weak => [0.00001, 0.000005],
            MetaPrior::Intermediate => [0.01, 0.005],
            MetaPrior::Strong => [0.2, 0.1],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetaPrior::Weak => "weak",
            MetaPrior::Intermediate => "intermediate",
            MetaPrior::Strong => "strong",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl ModelConfig {
    /// Two-layer network of the 2D mobile-agent experiment:
    /// d = (20, 10), z = (2, 1), τ = (4, 8), 30 steps, lr 0.001.
    pub fn experiment1(meta: MetaPrior) -> Self {
        let w = meta.weights();
        Self {
            layers: vec![
                LayerConfig {
                    d_size: 20,
                    z_size: 2,
                    tau: 4.0,
                    w: w[0],
                },
                LayerConfig {
                    d_size: 10,
                    z_size: 1,
                    tau: 8.0,
                    w: w[1],
                },
            ],
            w_init: 0.001,
            output_dim: 2,
            seq_len: 30,
            lr: 0.001,
            epochs: 50_000,
            error_dropout: 0.1,
            seed: 0,
        }
    }

    pub fn with_meta_prior(mut self, w: &[f64]) -> Self {
        for (layer, &wl) in self.layers.iter_mut().zip(w) {
            layer.w = wl;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.layers.is_empty() {
            return bad("at least one layer is required".into());
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.d_size == 0 {
                return bad(format!("layer {l}: d_size must be >= 1"));
            }
            if !(layer.tau >= 1.0) {
                return bad(format!("layer {l}: tau must be >= 1, got {}", layer.tau));
            }
            if !(layer.w >= 0.0) {
                return bad(format!("layer {l}: meta-prior must be >= 0, got {}", layer.w));
            }
            if l > 0 && !(layer.tau > self.layers[l - 1].tau) {
                return bad(format!("layer {l}: tau must increase upward"));
            }
        }
        if self.output_dim == 0 {
            return bad("output_dim must be >= 1".into());
        }
        if !(self.w_init >= 0.0) {
            return bad(format!("w_init must be >= 0, got {}", self.w_init));
        }
        if !(0.0..1.0).contains(&self.error_dropout) {
            return bad(format!("error_dropout must be in [0, 1), got {}", self.error_dropout));
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if self.seq_len == 0 {
            return bad("seq_len must be >= 1".into());
        }
        Ok(())
    }

    /// KLD weight of layer `l` at 0-based step `t`.
    #[inline]
    pub fn kld_weight(&self, t: usize, l: usize) -> f64 {
        if t == 0 {
            self.w_init
        } else {
            self.layers[l].w
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }
}

/// Offsets of each layer inside the flattened per-step d and z vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub d_off: Vec<usize>,
    pub z_off: Vec<usize>,
    pub d_total: usize,
    pub z_total: usize,
    pub out: usize,
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        let mut d_off = Vec::with_capacity(config.layers.len() + 1);
        let mut z_off = Vec::with_capacity(config.layers.len() + 1);
        let (mut d, mut z) = (0, 0);
        for layer in &config.layers {
            d_off.push(d);
            z_off.push(z);
            d += layer.d_size;
            z += layer.z_size;
        }
        d_off.push(d);
        z_off.push(z);
        Self {
            d_off,
            z_off,
            d_total: d,
            z_total: z,
            out: config.output_dim,
        }
    }

    #[inline]
    pub fn d_range(&self, l: usize) -> std::ops::Range<usize> {
        self.d_off[l]..self.d_off[l + 1]
    }

    #[inline]
    pub fn z_range(&self, l: usize) -> std::ops::Range<usize> {
        self.z_off[l]..self.z_off[l + 1]
    }

    pub fn layers(&self) -> usize {
        self.d_off.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment1_is_valid() {
        for m in MetaPrior::ALL {
            ModelConfig::experiment1(m).validate().unwrap();
        }
    }

    #[test]
    fn bottom_layer_gets_larger_weight() {
        for m in MetaPrior::ALL {
            let w = m.weights();
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = ModelConfig::experiment1(MetaPrior::Intermediate);
        c.error_dropout = 1.0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::experiment1(MetaPrior::Intermediate);
        c.layers[1].tau = 2.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn layout_offsets() {
        let l = ModelConfig::experiment1(MetaPrior::Weak).layout();
        assert_eq!(l.d_range(1), 20..30);
        assert_eq!(l.z_range(0), 0..2);
        assert_eq!(l.z_total, 3);
    }
}
