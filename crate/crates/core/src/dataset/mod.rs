//! Synthetic 2D branching-trajectory corpus and its file format.

mod generate;
mod geometry;
mod io;
mod trajectory;

pub use generate::{
    generate_center_goal_set, generate_dataset, DEFAULT_NOISE_SCALE, MAX_STEP, START_JITTER,
};
pub use geometry::{distance, Label, Point, Rect, TaskGeometry};
pub use io::{load_trajectories, parse_csv, save_trajectories, to_csv};
pub use trajectory::{flat_targets, Trajectory};
