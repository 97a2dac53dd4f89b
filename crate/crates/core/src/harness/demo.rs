//! Scripted scooping demonstration.
//!
//! The demo follows the prior boundary a fixed depth inside the pulp, from
//! the insertion angle down and under to the extraction angle, with
//! minimum-jerk timing so it starts and ends at rest.

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::dmp::Trajectory;
use crate::world::{MediumWorld, Point};

/// Minimum-jerk progress `10 s^3 - 15 s^4 + 6 s^5` on `s` in `[0, 1]`.
pub fn minimum_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// Point `inset` inside the boundary of `world` in direction `phi`.
pub fn inset_point(world: &MediumWorld, phi: f64, inset: f64) -> Point {
    world.center_point() + (world.radius(phi) - inset) * Point::new(phi.cos(), phi.sin())
}

/// Demonstration lasting one movement (`tau`) sampled every `demo.dt`.
pub fn demo_gen(config: &ExperimentConfig) -> Result<Trajectory, HarnessError> {
    let demo = &config.demo;
    let duration = config.dmp.tau;
    let steps = (duration / demo.dt).round() as usize;
    if steps < 2 {
        return Err(HarnessError::Config(
            "demo needs at least two samples".into(),
        ));
    }
    let positions = (0..=steps)
        .map(|k| {
            let s = minimum_jerk(k as f64 / steps as f64);
            let phi = demo.start_angle + s * (demo.end_angle - demo.start_angle);
            let p = inset_point(&config.world, phi, demo.inset);
            vec![p.x, p.y]
        })
        .collect();
    Ok(Trajectory::from_positions(
        duration / steps as f64,
        positions,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimum_jerk_profile() {
        assert_eq!(minimum_jerk(0.0), 0.0);
        assert_eq!(minimum_jerk(1.0), 1.0);
        assert!((minimum_jerk(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn demo_spans_insertion_to_extraction() {
        let config = ExperimentConfig::default();
        let demo = demo_gen(&config).unwrap();
        let first = Point::new(demo.points[0].y[0], demo.points[0].y[1]);
        let last_y = &demo.points.last().unwrap().y;
        let last = Point::new(last_y[0], last_y[1]);
        let start = inset_point(&config.world, config.demo.start_angle, config.demo.inset);
        let end = inset_point(&config.world, config.demo.end_angle, config.demo.inset);
        assert!((first - start).norm() < 1e-15);
        assert!((last - end).norm() < 1e-15);
    }

    #[test]
    fn demo_starts_and_ends_at_rest() {
        let demo = demo_gen(&ExperimentConfig::default()).unwrap();
        for p in [&demo.points[0], demo.points.last().unwrap()] {
            let speed = (p.dy[0].powi(2) + p.dy[1].powi(2)).sqrt();
            assert!(speed < 1e-3, "speed {speed}");
        }
    }

    #[test]
    fn demo_hugs_prior_boundary() {
        let config = ExperimentConfig::default();
        let demo = demo_gen(&config).unwrap();
        let inside = demo
            .positions()
            .filter(|y| {
                let d = config
                    .world
                    .medium_at(&Point::new(y[0], y[1]))
                    .signed_distance;
                (-0.002..=0.0).contains(&d)
            })
            .count();
        assert!(inside as f64 >= 0.9 * demo.len() as f64);
    }
}
