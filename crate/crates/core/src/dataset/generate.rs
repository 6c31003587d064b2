//! Seeded spline trajectories standing in for hand-drawn demonstrations.
//!
//! Each path is a piecewise cubic Hermite curve through three knots:
//! a jittered start at t = 0, the branch point near t = T/3, and a goal
//! drawn around its region center, reached somewhere in the last third of
//! the sequence. The tangent at the branch continues the approach
//! direction, so paths are indistinguishable until the branch. After the
//! goal step the agent stays put.

use super::geometry::{distance, Label, Point, TaskGeometry};
use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::numeric::SeededRng;

pub const MAX_STEP: f64 = 0.15;
pub const START_JITTER: f64 = 0.01;
pub const DEFAULT_NOISE_SCALE: f64 = 0.003;
const MAX_RETRIES: usize = 200;

fn hermite(p0: Point, m0: Point, p1: Point, m1: Point, dt: f64, s: f64) -> Point {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let c = |i: usize| h00 * p0[i] + h10 * dt * m0[i] + h01 * p1[i] + h11 * dt * m1[i];
    [c(0), c(1)]
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn scale(a: Point, k: f64) -> Point {
    [a[0] * k, a[1] * k]
}

/// Knot times `(branch, goal-range)` for a sequence of `steps` points.
fn timing(steps: usize) -> Result<(usize, usize, usize)> {
    if steps < 9 {
        return Err(Error::Config(format!("trajectories need at least 9 steps, got {steps}")));
    }
    let branch = steps / 3;
    let goal_lo = 2 * steps / 3 - 1;
    Ok((branch, goal_lo, steps - 1))
}

fn sample_goal(rng: &mut SeededRng, center: Point, geometry: &TaskGeometry) -> Point {
    loop {
        let g = [
            center[0] + geometry.goal_spread * rng.standard_normal(),
            center[1] + geometry.goal_spread * rng.standard_normal(),
        ];
        if distance(g, center) <= geometry.goal_radius {
            return g;
        }
    }
}

fn draw_path(
    rng: &mut SeededRng,
    steps: usize,
    geometry: &TaskGeometry,
    goal_center: Point,
    noise_scale: f64,
) -> Result<Vec<Point>> {
    let (tb_mid, tg_lo, tg_hi) = timing(steps)?;
    let j = START_JITTER / std::f64::consts::SQRT_2;
    let start = [
        geometry.start[0] + rng.uniform_range(0.0, j),
        geometry.start[1] + rng.uniform_range(0.0, j),
    ];
    let tb = rng.int_range(tb_mid - 1, tb_mid + 1);
    let branch = [
        geometry.branch[0] + rng.uniform_range(-0.01, 0.01),
        geometry.branch[1] + rng.uniform_range(-0.01, 0.01),
    ];
    let tg = rng.int_range(tg_lo, tg_hi);
    let goal = sample_goal(rng, goal_center, geometry);

    let v_in = scale(sub(branch, start), 1.0 / tb as f64);
    let m_branch = scale(v_in, 0.5);
    let mut points = Vec::with_capacity(steps);
    for t in 0..steps {
        let p = if t <= tb {
            hermite(start, v_in, branch, m_branch, tb as f64, t as f64 / tb as f64)
        } else if t <= tg {
            let dt = (tg - tb) as f64;
            hermite(branch, m_branch, goal, [0.0, 0.0], dt, (t - tb) as f64 / dt)
        } else {
            goal
        };
        points.push(p);
    }
    for p in points.iter_mut().take(tg).skip(1) {
        for c in p.iter_mut() {
            *c = (*c + noise_scale * rng.standard_normal()).clamp(0.0, 1.0);
        }
    }
    Ok(points)
}

fn acceptable(points: &[Point], geometry: &TaskGeometry, goal_center: Point) -> bool {
    points.iter().all(|p| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]))
        && points.iter().all(|&p| !geometry.in_obstacle(p))
        && points.windows(2).all(|w| distance(w[0], w[1]) <= MAX_STEP)
        && distance(points[points.len() - 1], goal_center) <= geometry.goal_radius
}

fn draw_trajectory(
    seed: u64,
    id: usize,
    label: Label,
    steps: usize,
    geometry: &TaskGeometry,
    noise_scale: f64,
) -> Result<Trajectory> {
    let mut rng = SeededRng::derived(seed, id as u64);
    let center = geometry.goal_center(label);
    for _ in 0..MAX_RETRIES {
        let points = draw_path(&mut rng, steps, geometry, center, noise_scale)?;
        if acceptable(&points, geometry, center) {
            return Ok(Trajectory {
                id,
                label,
                seed,
                points,
            });
        }
    }
    Err(Error::Config(format!(
        "trajectory {id} ({}) could not avoid the obstacles in {MAX_RETRIES} attempts",
        label.name()
    )))
}

/// `n/2` left and `n/2` right trajectories, alternating, starting left.
pub fn generate_dataset(
    seed: u64,
    n: usize,
    steps: usize,
    geometry: &TaskGeometry,
    noise_scale: f64,
) -> Result<Vec<Trajectory>> {
    if n % 2 != 0 {
        return Err(Error::Config(format!("dataset size must be even, got {n}")));
    }
    if !(noise_scale >= 0.0) {
        return Err(Error::Config(format!("noise_scale must be >= 0, got {noise_scale}")));
    }
    geometry.validate()?;
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Left } else { Label::Right };
            draw_trajectory(seed, i, label, steps, geometry, noise_scale)
        })
        .collect()
}

/// Trajectories through the branch point to goals in the untrained middle.
pub fn generate_center_goal_set(
    seed: u64,
    n: usize,
    steps: usize,
    geometry: &TaskGeometry,
    noise_scale: f64,
) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::Config("center goal set needs n >= 1".into()));
    }
    geometry.validate()?;
    let set: Vec<Trajectory> = (0..n)
        .map(|i| draw_trajectory(seed, i, Label::Center, steps, geometry, noise_scale))
        .collect::<Result<_>>()?;
    for t in &set {
        let end = t.end();
        if geometry.in_goal(Label::Left, end) || geometry.in_goal(Label::Right, end) {
            return Err(Error::Config(format!("center trajectory {} ends in a trained region", t.id)));
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo() -> TaskGeometry {
        TaskGeometry::default()
    }

    #[test]
    fn balanced_labels() {
        let set = generate_dataset(1, 60, 30, &geo(), DEFAULT_NOISE_SCALE).unwrap();
        assert_eq!(set.iter().filter(|t| t.label == Label::Left).count(), 30);
        assert_eq!(set.iter().filter(|t| t.label == Label::Right).count(), 30);
        assert!(generate_dataset(1, 7, 30, &geo(), 0.0).is_err());
    }

    #[test]
    fn geometric_invariants() {
        let g = geo();
        for seed in 0..5 {
            for t in generate_dataset(seed, 40, 30, &g, DEFAULT_NOISE_SCALE).unwrap() {
                assert_eq!(t.len(), 30);
                assert!(distance(t.start(), g.start) <= START_JITTER);
                assert!(t.max_step() <= MAX_STEP);
                assert!(g.in_goal(t.label, t.end()));
                assert!(t.points.iter().all(|&p| !g.in_obstacle(p)));
                assert!(t.points.iter().all(|p| p.iter().all(|c| (0.0..=1.0).contains(c))));
            }
        }
    }

    #[test]
    fn noiseless_is_reproducible() {
        let a = generate_dataset(9, 10, 30, &geo(), 0.0).unwrap();
        let b = generate_dataset(9, 10, 30, &geo(), 0.0).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(10, 10, 30, &geo(), 0.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stationary_after_goal() {
        let t = &generate_dataset(2, 2, 30, &geo(), DEFAULT_NOISE_SCALE).unwrap()[0];
        let last = t.end();
        let still = t.points.iter().rev().take_while(|&&p| p == last).count();
        assert!(still >= 1);
        assert!(still <= 11);
    }

    #[test]
    fn center_set_outside_trained_regions() {
        let g = geo();
        let set = generate_center_goal_set(4, 10, 30, &g, DEFAULT_NOISE_SCALE).unwrap();
        assert_eq!(set.len(), 10);
        for t in &set {
            assert!(g.in_goal(Label::Center, t.end()));
            assert_eq!(g.classify(t.end()), None);
        }
        assert_eq!(set, generate_center_goal_set(4, 10, 30, &g, DEFAULT_NOISE_SCALE).unwrap());
    }
}
