//! Comparison models: a deterministic forward model (FM) and an MTRNN with
//! a stochastic initial state (SI).

mod driven;
mod fm;
mod si;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pvrnn::ModelConfig;
pub(crate) use crate::pvrnn::check_targets;

pub use driven::{driven_backward, driven_rollout, DrivenGradients, DrivenNet, DrivenTrace, InputPlan};
pub use fm::{fm_loss, fm_step, fm_teacher_plan, fm_training_plan, train_fm, FmParams, TrainedFm};
pub use si::{
    si_backward, si_loss, si_plan, si_rollout, si_width, train_si, SiInit, SiParams, SiTrace, TrainedSi,
};

/// Weight on the model's own prediction when blending it with the ground
/// truth to form the next input.
pub const DEFAULT_BLEND: f64 = 0.9;
pub const SI_CLIP_NORM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Layer sizes, time constants and optimiser settings. Latent sizes and
    /// meta-priors are ignored; `w_init` weights the SI first-step KLD.
    pub model: ModelConfig,
    pub blend: f64,
    pub clip_norm: Option<f64>,
}

impl BaselineConfig {
    pub fn fm(model: ModelConfig) -> Self {
        Self {
            model,
            blend: DEFAULT_BLEND,
            clip_norm: None,
        }
    }

    pub fn si(model: ModelConfig) -> Self {
        Self {
            model,
            blend: DEFAULT_BLEND,
            clip_norm: Some(SI_CLIP_NORM),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(0.0..=1.0).contains(&self.blend) {
            return Err(Error::Config(format!("blend must be in [0, 1], got {}", self.blend)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm must be > 0, got {c}")));
            }
        }
        Ok(())
    }
}
