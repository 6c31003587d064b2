//! Dense numeric kernel: small matrices, Adam, seeded Gaussian sampling and
//! a central-difference gradient oracle.

mod adam;
mod gradcheck;
mod matrix;
mod rng;

pub use adam::{adam_step, clip_global_norm, AdamState, DEFAULT_BETA1, DEFAULT_BETA2};
pub use gradcheck::{finite_diff_gradient, relative_error};
pub use matrix::{axpy, dot, exp_floor_vec, norm_sq, tanh_vec, Matrix};
pub use rng::{domain_seed, reparameterize, sample_gaussian, SeededRng};
