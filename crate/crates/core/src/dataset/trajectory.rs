use serde::{Deserialize, Serialize};

use super::geometry::{Label, Point};

/// One 2D sequence of agent positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    pub label: Label,
    /// Master seed of the corpus this trajectory was drawn from.
    pub seed: u64,
    pub points: Vec<Point>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> Point {
        self.points[0]
    }

    pub fn end(&self) -> Point {
        self.points[self.points.len() - 1]
    }

    /// Row-major `len × 2`.
    pub fn flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn from_flat(id: usize, label: Label, seed: u64, flat: &[f64]) -> Self {
        Self {
            id,
            label,
            seed,
            points: flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        }
    }

    pub fn max_step(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| super::geometry::distance(w[0], w[1]))
            .fold(0.0, f64::max)
    }
}

/// Flattened targets for training.
pub fn flat_targets(set: &[Trajectory]) -> Vec<Vec<f64>> {
    set.iter().map(Trajectory::flat).collect()
}
