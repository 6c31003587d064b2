use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Axis-aligned box `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    /// Distance from `p` to the box, 0 inside.
    pub fn distance_to(&self, p: Point) -> f64 {
        let dx = (self.x0 - p[0]).max(0.0).max(p[0] - self.x1);
        let dy = (self.y0 - p[1]).max(0.0).max(p[1] - self.y1);
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Left,
    Right,
    Center,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Left => "left",
            Label::Right => "right",
            Label::Center => "center",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "left" => Some(Label::Left),
            "right" => Some(Label::Right),
            "center" => Some(Label::Center),
            _ => None,
        }
    }
}

/// Layout of the 2D arena. All coordinates are in the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGeometry {
    pub start: Point,
    pub branch: Point,
    pub left_goal: Point,
    pub right_goal: Point,
    /// Midway between the two trained goals; never used for training data.
    pub center_goal: Point,
    pub goal_radius: f64,
    /// Standard deviation of sampled goals around their center.
    pub goal_spread: f64,
    pub obstacles: Vec<Rect>,
}

impl Default for TaskGeometry {
    fn default() -> Self {
        let left_goal = [0.2, 0.8];
        let right_goal = [0.85, 0.3];
        Self {
            start: [0.0, 0.0],
            branch: [0.38, 0.42],
            left_goal,
            right_goal,
            center_goal: [
                0.5 * (left_goal[0] + right_goal[0]),
                0.5 * (left_goal[1] + right_goal[1]),
            ],
            goal_radius: 0.12,
            goal_spread: 0.05,
            obstacles: vec![Rect::new(0.66, 0.62, 0.95, 0.95), Rect::new(0.5, 0.0, 1.0, 0.15)],
        }
    }
}

impl TaskGeometry {
    pub fn goal_center(&self, label: Label) -> Point {
        match label {
            Label::Left => self.left_goal,
            Label::Right => self.right_goal,
            Label::Center => self.center_goal,
        }
    }

    /// Closed disc test: a point on the boundary is inside.
    pub fn in_goal(&self, label: Label, p: Point) -> bool {
        distance(p, self.goal_center(label)) <= self.goal_radius
    }

    pub fn in_obstacle(&self, p: Point) -> bool {
        self.obstacles.iter().any(|r| r.contains(p))
    }

    /// Trained goal (left or right) whose center is nearer to `p`; ties go left.
    pub fn nearest_trained_goal(&self, p: Point) -> Label {
        if distance(p, self.left_goal) <= distance(p, self.right_goal) {
            Label::Left
        } else {
            Label::Right
        }
    }

    /// Trained goal region containing `p`, if any.
    pub fn classify(&self, p: Point) -> Option<Label> {
        [Label::Left, Label::Right].into_iter().find(|&l| self.in_goal(l, p))
    }

    /// Goal discs must be disjoint from every obstacle and from each other.
    pub fn validate(&self) -> crate::error::Result<()> {
        for label in [Label::Left, Label::Right, Label::Center] {
            let c = self.goal_center(label);
            if self.obstacles.iter().any(|r| r.distance_to(c) <= self.goal_radius) {
                return Err(crate::error::Error::Config(format!(
                    "{} goal region overlaps an obstacle",
                    label.name()
                )));
            }
        }
        if distance(self.left_goal, self.right_goal) <= 2.0 * self.goal_radius {
            return Err(crate::error::Error::Config("goal regions overlap".into()));
        }
        if !(self.goal_radius > 0.0 && self.goal_spread >= 0.0) {
            return Err(crate::error::Error::Config("goal radius must be > 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry_is_valid() {
        let g = TaskGeometry::default();
        g.validate().unwrap();
        assert_eq!(g.center_goal, [0.525, 0.55]);
        assert!(!g.in_goal(Label::Left, g.center_goal));
        assert!(!g.in_goal(Label::Right, g.center_goal));
    }

    #[test]
    fn boundary_counts_as_inside() {
        let g = TaskGeometry::default();
        let p = [g.left_goal[0] + g.goal_radius, g.left_goal[1]];
        assert!(g.in_goal(Label::Left, p));
        assert_eq!(g.classify(p), Some(Label::Left));
    }

    #[test]
    fn rect_distance() {
        let r = Rect::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(r.distance_to([0.5, 0.5]), 0.0);
        assert!((r.distance_to([2.0, 1.0]) - 1.0).abs() < 1e-15);
    }
}
