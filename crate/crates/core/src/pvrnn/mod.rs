//! PV-RNN: a multiple-timescale RNN whose per-step Gaussian latents have a
//! learned prior and a per-sequence posterior, trained by maximising the
//! meta-prior-weighted lower bound.

mod backward;
mod certify;
mod cell;
mod config;
mod elbo;
mod generate;
mod model;
mod params;
mod trace;
mod train;

pub use backward::{backward, Gradients};
pub use certify::{certification_config, certify_gradients, GradientCheck, CERTIFY_FLOOR, CERTIFY_STEP};
pub use cell::{glorot, layer_backward, layer_forward, tanh_leak_backward, RecurrentWeights};
pub use config::{LayerConfig, Layout, MetaPrior, ModelConfig, SIGMA_FLOOR};
pub use elbo::{
    complexity, elbo, endpoint_output_grad, estimated_lower_bound, kld_per_step, masked_output_grad,
    ElboReport,
};
pub use generate::{
    forward_posterior, forward_prior, forward_prior_capped, prior_rollouts, regenerate_target,
    regenerate_target_capped,
};
pub use model::{kld_term, kld_unit, mtrnn_cell, posterior_params, prior_params, Kld};
pub use params::{AdaptationVars, LayerParams, NetworkParams};
pub use trace::{rollout, ForwardTrace, NoiseTable, Sampling, ZSource};
pub(crate) use train::check_targets;
pub use train::{sequence_gradients, train, train_with_progress, TrainedModel};
