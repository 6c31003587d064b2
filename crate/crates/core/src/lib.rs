//! Core of the GLean planning laboratory: a small dense numeric kernel, the
//! PV-RNN generative model with hand-written BPTT, the forward-model and
//! stochastic-initial-state baselines, the planners, and the synthetic 2D
//! trajectory corpus.

pub mod baselines;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod kvtext;
pub mod numeric;
pub mod par;
pub mod planner;
pub mod pvrnn;

pub use error::{Error, Result};
pub use par::Execution;
