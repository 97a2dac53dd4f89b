//! Planar two-medium world and the arm that cuts through it.
//!
//! The pulp is the interior of a star-shaped curve `r(phi) = R + sum_k a_k
//! cos(k phi + p_k)` around `center`; everything outside is peel. Cutting
//! resistance is viscous in both media, with an extra penalty spring
//! pushing the tip back out of the peel. The arm senses the contact force
//! through its joint torques.

use nalgebra::{Matrix2, Matrix2xX, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid arm: {0}")]
    InvalidArm(String),
    #[error("target ({x:.6}, {y:.6}) is {distance:.6} m from the base, beyond reach {reach:.6} m")]
    OutOfWorkspace {
        x: f64,
        y: f64,
        distance: f64,
        reach: f64,
    },
    #[error("inverse kinematics did not converge: residual {residual:.3e} m after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
}

type Result<T> = std::result::Result<T, WorldError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Medium {
    Pulp,
    Peel,
}

/// Two-medium environment. Field order matches the configuration format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumWorld {
    pub center: [f64; 2],
    pub base_radius: f64,
    /// `amplitudes[k - 1]` scales the order-`k` harmonic.
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub mu_pulp: f64,
    pub mu_peel: f64,
    pub peel_penalty: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Medium and signed distance of a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediumQuery {
    pub medium: Medium,
    /// Radial distance to the boundary, negative inside the pulp.
    pub signed_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactResult {
    pub medium: Medium,
    pub signed_distance: f64,
    pub force: Point,
    pub tip_velocity: Point,
}

impl MediumWorld {
    /// An unperturbed circular world.
    pub fn circle(center: [f64; 2], radius: f64) -> Self {
        Self {
            center,
            base_radius: radius,
            amplitudes: Vec::new(),
            phases: Vec::new(),
            mu_pulp: 5.0,
            mu_peel: 15.0,
            peel_penalty: 200.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(WorldError::InvalidWorld(m));
        if !self.center.iter().all(|c| c.is_finite()) {
            return bad("center must be finite".into());
        }
        if !(self.base_radius > 0.0 && self.base_radius.is_finite()) {
            return bad(format!(
                "base radius must be positive, got {}",
                self.base_radius
            ));
        }
        if self.amplitudes.len() != self.phases.len() {
            return bad(format!(
                "{} amplitudes but {} phases",
                self.amplitudes.len(),
                self.phases.len()
            ));
        }
        if self
            .amplitudes
            .iter()
            .chain(&self.phases)
            .any(|v| !v.is_finite())
        {
            return bad("perturbation terms must be finite".into());
        }
        // r(phi) >= R - sum |a_k| > 0 keeps the polar curve simple
        let spread: f64 = self.amplitudes.iter().map(|a| a.abs()).sum();
        if spread >= self.base_radius {
            return bad(format!(
                "perturbation amplitudes sum to {spread}, not below base radius {}",
                self.base_radius
            ));
        }
        if !(self.mu_pulp > 0.0 && self.mu_peel > self.mu_pulp) {
            return bad(format!(
                "need mu_peel > mu_pulp > 0, got mu_pulp = {}, mu_peel = {}",
                self.mu_pulp, self.mu_peel
            ));
        }
        if !(self.peel_penalty >= 0.0 && self.peel_penalty.is_finite()) {
            return bad("peel penalty must be non-negative".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise sigma must be non-negative".into());
        }
        Ok(())
    }

    pub fn center_point(&self) -> Point {
        Point::new(self.center[0], self.center[1])
    }

    /// Boundary radius in direction `phi`.
    pub fn radius(&self, phi: f64) -> f64 {
        self.base_radius
            + self
                .amplitudes
                .iter()
                .zip(&self.phases)
                .enumerate()
                .map(|(i, (a, p))| a * ((i + 1) as f64 * phi + p).cos())
                .sum::<f64>()
    }

    /// `d r / d phi`.
    pub fn radius_slope(&self, phi: f64) -> f64 {
        -self
            .amplitudes
            .iter()
            .zip(&self.phases)
            .enumerate()
            .map(|(i, (a, p))| {
                let k = (i + 1) as f64;
                a * k * (k * phi + p).sin()
            })
            .sum::<f64>()
    }

    /// Boundary point in direction `phi`.
    pub fn boundary_point(&self, phi: f64) -> Point {
        self.center_point() + self.radius(phi) * Point::new(phi.cos(), phi.sin())
    }

    /// Medium and signed radial distance of `p`. The center itself is
    /// measured along `phi = 0`.
    pub fn medium_at(&self, p: &Point) -> MediumQuery {
        let rel = p - self.center_point();
        let rho = rel.norm();
        let phi = if rho == 0.0 { 0.0 } else { rel.y.atan2(rel.x) };
        let d = rho - self.radius(phi);
        MediumQuery {
            medium: if d < 0.0 { Medium::Pulp } else { Medium::Peel },
            signed_distance: d,
        }
    }

    /// Unit vector along the gradient of the signed distance, pointing out
    /// of the pulp. Falls back to `+x` at the center.
    pub fn outward_normal(&self, p: &Point) -> Point {
        let rel = p - self.center_point();
        let rho = rel.norm();
        if rho == 0.0 {
            return Point::x();
        }
        let phi = rel.y.atan2(rel.x);
        let radial = rel / rho;
        let tangential = Point::new(-radial.y, radial.x);
        (radial - self.radius_slope(phi) / rho * tangential).normalize()
    }

    pub fn mu(&self, medium: Medium) -> f64 {
        match medium {
            Medium::Pulp => self.mu_pulp,
            Medium::Peel => self.mu_peel,
        }
    }

    /// Resistance on a tip at `tip` moving with velocity `v`: viscous drag
    /// in the local medium plus a penalty push back along the inward normal
    /// while in the peel.
    pub fn contact_force(&self, tip: &Point, v: &Point) -> Point {
        let q = self.medium_at(tip);
        let mut force = -self.mu(q.medium) * v;
        if q.signed_distance >= 0.0 {
            force -= self.peel_penalty * q.signed_distance * self.outward_normal(tip);
        }
        force
    }
}

/// Tip and joint positions of a planar arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPose {
    /// Base followed by the end of every link; the last entry is the tip.
    pub joints: Vec<Point>,
}

impl ArmPose {
    pub fn tip(&self) -> Point {
        *self.joints.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub damping: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 200,
            damping: 1e-3,
        }
    }
}

/// Serial planar chain with revolute joints. Joint angles are relative to
/// the previous link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarArm {
    pub link_lengths: Vec<f64>,
    pub joint_angles: Vec<f64>,
    pub base: [f64; 2],
}

impl PlanarArm {
    pub fn new(link_lengths: Vec<f64>, joint_angles: Vec<f64>, base: [f64; 2]) -> Result<Self> {
        if link_lengths.is_empty() {
            return Err(WorldError::InvalidArm("arm needs at least one link".into()));
        }
        if link_lengths.len() != joint_angles.len() {
            return Err(WorldError::InvalidArm(format!(
                "{} links but {} joint angles",
                link_lengths.len(),
                joint_angles.len()
            )));
        }
        if link_lengths.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(WorldError::InvalidArm(
                "link lengths must be non-negative".into(),
            ));
        }
        Ok(Self {
            link_lengths,
            joint_angles,
            base,
        })
    }

    pub fn joints(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn base_point(&self) -> Point {
        Point::new(self.base[0], self.base[1])
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn fk(&self) -> ArmPose {
        fk_angles(&self.link_lengths, &self.joint_angles, self.base_point())
    }

    pub fn tip(&self) -> Point {
        self.fk().tip()
    }

    /// Analytic 2xJ Jacobian of the tip position.
    pub fn jacobian(&self) -> Matrix2xX<f64> {
        jacobian_angles(&self.link_lengths, &self.joint_angles)
    }

    /// Damped least-squares IK from the current posture. Returns the joint
    /// angles placing the tip on `target`; the arm itself is unchanged.
    pub fn ik(&self, target: &Point, opts: &IkOptions) -> Result<Vec<f64>> {
        let distance = (target - self.base_point()).norm();
        if distance > self.reach() {
            return Err(WorldError::OutOfWorkspace {
                x: target.x,
                y: target.y,
                distance,
                reach: self.reach(),
            });
        }
        let base = self.base_point();
        let mut angles = self.joint_angles.clone();
        let damping2 = opts.damping * opts.damping;
        let mut residual = f64::INFINITY;
        for _ in 0..=opts.max_iterations {
            let error = target - fk_angles(&self.link_lengths, &angles, base).tip();
            residual = error.norm();
            if residual < opts.tolerance {
                return Ok(angles);
            }
            let jac = jacobian_angles(&self.link_lengths, &angles);
            let gram = &jac * jac.transpose() + Matrix2::identity() * damping2;
            let Some(inv) = gram.try_inverse() else {
                break;
            };
            let step = jac.transpose() * (inv * error);
            for (a, s) in angles.iter_mut().zip(step.iter()) {
                *a += s;
            }
        }
        Err(WorldError::NoConvergence {
            residual,
            iterations: opts.max_iterations,
        })
    }
}

fn fk_angles(lengths: &[f64], angles: &[f64], base: Point) -> ArmPose {
    let mut joints = Vec::with_capacity(lengths.len() + 1);
    joints.push(base);
    let mut heading = 0.0;
    let mut p = base;
    for (l, a) in lengths.iter().zip(angles) {
        heading += a;
        p += *l * Point::new(heading.cos(), heading.sin());
        joints.push(p);
    }
    ArmPose { joints }
}

fn jacobian_angles(lengths: &[f64], angles: &[f64]) -> Matrix2xX<f64> {
    let n = lengths.len();
    // column j sums the contributions of every link distal to joint j
    let mut heading = 0.0;
    let link_vectors: Vec<Point> = lengths
        .iter()
        .zip(angles)
        .map(|(l, a)| {
            heading += a;
            *l * Point::new(heading.cos(), heading.sin())
        })
        .collect();
    let mut jac = Matrix2xX::zeros(n);
    let mut distal = Point::zeros();
    for j in (0..n).rev() {
        distal += link_vectors[j];
        jac.set_column(j, &Point::new(-distal.y, distal.x));
    }
    jac
}

/// Free-function form of [`PlanarArm::fk`].
pub fn fk(arm: &PlanarArm) -> ArmPose {
    arm.fk()
}

/// Free-function form of [`PlanarArm::ik`] with default options.
pub fn ik(arm: &PlanarArm, target: &Point) -> Result<Vec<f64>> {
    arm.ik(target, &IkOptions::default())
}

/// Free-function form of [`PlanarArm::jacobian`].
pub fn jacobian(arm: &PlanarArm) -> Matrix2xX<f64> {
    arm.jacobian()
}

/// Joint torques balancing `force` at the tip, `J^T F`, plus independent
/// Gaussian sensor noise.
pub fn sense_torques<R: Rng + ?Sized>(
    arm: &PlanarArm,
    force: &Point,
    noise_sigma: f64,
    rng: &mut R,
) -> Vec<f64> {
    let clean = arm.jacobian().transpose() * force;
    if noise_sigma == 0.0 {
        return clean.iter().copied().collect();
    }
    let noise = Normal::new(0.0, noise_sigma).expect("noise sigma is finite and non-negative");
    clean.iter().map(|t| t + noise.sample(rng)).collect()
}

/// Result of advancing the world by one commanded tip position.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldStep {
    pub arm: PlanarArm,
    pub contact: ContactResult,
    pub torques: Vec<f64>,
}

/// Moves the arm onto `commanded_tip`, then senses the contact produced by
/// moving there over `dt`.
pub fn step_world<R: Rng + ?Sized>(
    world: &MediumWorld,
    arm: &PlanarArm,
    commanded_tip: &Point,
    dt: f64,
    ik_options: &IkOptions,
    rng: &mut R,
) -> Result<WorldStep> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(WorldError::InvalidTimeStep(dt));
    }
    let old_tip = arm.tip();
    let angles = arm.ik(commanded_tip, ik_options)?;
    let arm = PlanarArm {
        joint_angles: angles,
        ..arm.clone()
    };
    let tip = arm.tip();
    let tip_velocity = (tip - old_tip) / dt;
    let q = world.medium_at(&tip);
    let force = world.contact_force(&tip, &tip_velocity);
    let torques = sense_torques(&arm, &force, world.noise_sigma, rng);
    Ok(WorldStep {
        arm,
        contact: ContactResult {
            medium: q.medium,
            signed_distance: q.signed_distance,
            force,
            tip_velocity,
        },
        torques,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn bumpy_world() -> MediumWorld {
        MediumWorld {
            amplitudes: vec![0.002, 0.003, -0.001],
            phases: vec![0.3, -1.1, 2.0],
            ..MediumWorld::circle([0.01, -0.02], 0.04)
        }
    }

    fn three_link() -> PlanarArm {
        PlanarArm::new(vec![0.15, 0.12, 0.08], vec![-1.2, -0.9, -0.7], [0.0, 0.25]).unwrap()
    }

    #[test]
    fn center_is_pulp() {
        let w = bumpy_world();
        let q = w.medium_at(&w.center_point());
        assert_eq!(q.medium, Medium::Pulp);
        assert_abs_diff_eq!(q.signed_distance, -w.radius(0.0));
    }

    #[test]
    fn circle_distance() {
        let w = MediumWorld::circle([0.0, 0.0], 0.04);
        let q = w.medium_at(&Point::new(0.0, 0.05));
        assert_eq!(q.medium, Medium::Peel);
        assert_abs_diff_eq!(q.signed_distance, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn validation_rejects_bad_worlds() {
        let ok = bumpy_world();
        assert!(ok.validate().is_ok());
        let soft_peel = MediumWorld {
            mu_peel: 4.0,
            ..ok.clone()
        };
        assert!(soft_peel.validate().is_err());
        let self_crossing = MediumWorld {
            amplitudes: vec![0.03, 0.02],
            phases: vec![0.0, 0.0],
            ..ok.clone()
        };
        assert!(self_crossing.validate().is_err());
        let mismatched = MediumWorld {
            phases: vec![0.0],
            ..ok
        };
        assert!(mismatched.validate().is_err());
    }

    #[test]
    fn still_tip_in_pulp_feels_nothing() {
        let w = bumpy_world();
        assert_eq!(
            w.contact_force(&w.center_point(), &Point::zeros()),
            Point::zeros()
        );
    }

    #[test]
    fn viscous_pulp_force() {
        let w = MediumWorld::circle([0.0, 0.0], 0.04);
        let f = w.contact_force(&Point::new(0.01, 0.0), &Point::new(0.01, 0.0));
        assert_abs_diff_eq!(f.x, -0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(f.y, 0.0);
    }

    #[test]
    fn peel_penalty_pushes_inward() {
        let w = MediumWorld {
            peel_penalty: 200.0,
            ..bumpy_world()
        };
        let phi = 0.7_f64;
        let dir = Point::new(phi.cos(), phi.sin());
        let tip = w.center_point() + (w.radius(phi) + 0.002) * dir;
        assert_abs_diff_eq!(w.medium_at(&tip).signed_distance, 0.002, epsilon = 1e-15);
        let f = w.contact_force(&tip, &Point::zeros());
        assert_abs_diff_eq!(f.norm(), 0.4, epsilon = 1e-12);
        // numeric gradient of the signed distance
        let h = 1e-7;
        let d = |p: Point| w.medium_at(&p).signed_distance;
        let grad = Point::new(
            (d(tip + Point::x() * h) - d(tip - Point::x() * h)) / (2.0 * h),
            (d(tip + Point::y() * h) - d(tip - Point::y() * h)) / (2.0 * h),
        )
        .normalize();
        assert!((f.normalize() + grad).norm() < 1e-6);
    }

    #[test]
    fn straight_chain() {
        let arm = PlanarArm::new(vec![0.3, 0.2, 0.1], vec![0.0; 3], [1.0, 2.0]).unwrap();
        let tip = arm.tip();
        assert_abs_diff_eq!(tip.x, 1.6, epsilon = 1e-15);
        assert_abs_diff_eq!(tip.y, 2.0);
    }

    #[test]
    fn rotated_two_link() {
        let arm = PlanarArm::new(vec![1.0, 1.0], vec![FRAC_PI_2, 0.0], [0.0, 0.0]).unwrap();
        let tip = arm.tip();
        assert_abs_diff_eq!(tip.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tip.y, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn single_link_jacobian() {
        let arm = PlanarArm::new(vec![1.0], vec![0.0], [0.0, 0.0]).unwrap();
        let j = arm.jacobian();
        assert_eq!(j.ncols(), 1);
        assert_abs_diff_eq!(j[(0, 0)], 0.0);
        assert_abs_diff_eq!(j[(1, 0)], 1.0);
    }

    #[test]
    fn zero_length_link_has_zero_column() {
        let arm = PlanarArm::new(vec![0.3, 0.2, 0.0], vec![0.4, -0.2, 1.0], [0.0, 0.0]).unwrap();
        let j = arm.jacobian();
        assert_eq!(j.column(2).norm(), 0.0);
    }

    #[test]
    fn ik_fixed_point() {
        let arm = three_link();
        let angles = arm.ik(&arm.tip(), &IkOptions::default()).unwrap();
        assert_eq!(angles, arm.joint_angles);
    }

    #[test]
    fn ik_reaches_nearby_target() {
        let arm = three_link();
        let target = arm.tip() + Point::new(0.02, -0.015);
        let angles = arm.ik(&target, &IkOptions::default()).unwrap();
        let moved = PlanarArm {
            joint_angles: angles,
            ..arm
        };
        assert!((moved.tip() - target).norm() < 1e-6);
    }

    #[test]
    fn ik_rejects_unreachable_target() {
        let arm = three_link();
        let target = arm.base_point() + Point::new(arm.reach() + 0.1, 0.0);
        assert!(matches!(
            arm.ik(&target, &IkOptions::default()),
            Err(WorldError::OutOfWorkspace { .. })
        ));
    }

    #[test]
    fn torques_without_force_or_noise_vanish() {
        let arm = three_link();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tau = sense_torques(&arm, &Point::zeros(), 0.0, &mut rng);
        assert_eq!(tau, vec![0.0; 3]);
    }

    #[test]
    fn noisy_torques_are_seeded() {
        let arm = three_link();
        let f = Point::new(0.1, -0.3);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5)
                .map(|_| sense_torques(&arm, &f, 0.01, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn standing_still_gives_no_viscous_force() {
        let w = MediumWorld::circle([0.0, 0.0], 0.04);
        let arm = three_link();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tip = arm.tip();
        let step = step_world(&w, &arm, &tip, 0.04, &IkOptions::default(), &mut rng).unwrap();
        assert_eq!(step.contact.tip_velocity, Point::zeros());
        if step.contact.medium == Medium::Pulp {
            assert_eq!(step.contact.force, Point::zeros());
        }
    }

    #[test]
    fn step_world_rejects_bad_dt() {
        let w = MediumWorld::circle([0.0, 0.0], 0.04);
        let arm = three_link();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(step_world(&w, &arm, &arm.tip(), 0.0, &IkOptions::default(), &mut rng).is_err());
    }
}
