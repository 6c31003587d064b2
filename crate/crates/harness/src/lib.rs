//! Experiment orchestration for the glean planning lab: spec files, the
//! pipeline stages, metrics, run records and the trend checks.

pub mod criteria;
pub mod metrics;
pub mod pipeline;
pub mod record;
pub mod spec;

pub use pipeline::Pipeline;
pub use record::RunRecord;
pub use spec::ExperimentSpec;

/// Process exit code for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(err: &glean_core::Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}
