//! Dynamic movement primitives.
//!
//! A [`Dmp`] is a set of critically damped point attractors, one per task
//! dimension, sharing a single phase variable and a single set of Gaussian
//! basis functions. The learned forcing term bends each attractor's path
//! while vanishing as the phase decays, so every rollout still ends at the
//! goal.
//!
//! The transformation system is integrated in the time-scaled form
//! `tau^2 * ddy = alpha_z * (beta_z * (g - y) - tau * dy) + f`, which for
//! `tau = 1` is exactly `tau * ddy = alpha_z * (beta_z * (g - y) - dy) + f`
//! and keeps rollouts time-stretchable for any `tau`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format;

/// Default transformation-system stiffness.
pub const DEFAULT_ALPHA_Z: f64 = 25.0;
/// Default phase decay rate; the phase reaches ~0.01 at `t = tau`.
pub const DEFAULT_ALPHA_X: f64 = 4.6;
/// Ridge term added to every per-basis regression denominator.
pub const LWR_RIDGE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed DMP document: {0}")]
    Document(String),
}

type Result<T> = std::result::Result<T, DmpError>;

fn invalid(msg: impl Into<String>) -> DmpError {
    DmpError::InvalidArgument(msg.into())
}

/// Phase dynamics `tau * dx = -alpha_x * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalSystem {
    pub alpha_x: f64,
    pub tau: f64,
    pub x: f64,
}

impl CanonicalSystem {
    /// A canonical system at the start of a movement (`x = 1`).
    pub fn new(alpha_x: f64, tau: f64) -> Result<Self> {
        if !(alpha_x > 0.0 && alpha_x.is_finite()) {
            return Err(invalid(format!("alpha_x must be positive, got {alpha_x}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid(format!("tau must be positive, got {tau}")));
        }
        Ok(Self {
            alpha_x,
            tau,
            x: 1.0,
        })
    }

    /// One explicit Euler step of the phase. The phase is clamped to stay
    /// positive when `dt` exceeds `tau / alpha_x`.
    pub fn step(&self, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        Ok(self.step_unchecked(dt))
    }

    fn step_unchecked(&self, dt: f64) -> Self {
        let x = self.x + dt * (-self.alpha_x * self.x / self.tau);
        Self {
            x: x.max(f64::MIN_POSITIVE),
            ..*self
        }
    }

    /// Closed-form phase at time `t` from `x = 1`.
    pub fn phase_at(&self, t: f64) -> f64 {
        (-self.alpha_x * t / self.tau).exp()
    }
}

/// Free-function form of [`CanonicalSystem::step`].
pub fn canonical_step(cs: &CanonicalSystem, dt: f64) -> Result<CanonicalSystem> {
    cs.step(dt)
}

/// Gaussian basis functions over the phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    centers: Vec<f64>,
    widths: Vec<f64>,
}

impl BasisSet {
    pub fn new(centers: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(invalid("basis set needs at least one function"));
        }
        if centers.len() != widths.len() {
            return Err(invalid(format!(
                "{} centers but {} widths",
                centers.len(),
                widths.len()
            )));
        }
        if centers.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
            return Err(invalid("basis centers must lie in (0, 1]"));
        }
        if centers.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("basis centers must be strictly decreasing"));
        }
        if widths.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(invalid("basis widths must be positive and finite"));
        }
        Ok(Self { centers, widths })
    }

    /// `n` centers equally spaced in time over one movement, i.e.
    /// `c_i = exp(-alpha_x * i / (n - 1))`, with widths set from the gap to
    /// the next center.
    pub fn spaced(n: usize, alpha_x: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("basis set needs at least one function"));
        }
        if !(alpha_x > 0.0) {
            return Err(invalid(format!("alpha_x must be positive, got {alpha_x}")));
        }
        if n == 1 {
            return Self::new(vec![1.0], vec![1.0]);
        }
        let centers: Vec<f64> = (0..n)
            .map(|i| (-alpha_x * i as f64 / (n - 1) as f64).exp())
            .collect();
        let mut widths: Vec<f64> = centers
            .windows(2)
            .map(|w| 1.0 / (w[1] - w[0]).powi(2))
            .collect();
        widths.push(*widths.last().unwrap());
        Self::new(centers, widths)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// `psi_i(x) = exp(-h_i (x - c_i)^2)` for every basis function.
    pub fn activations(&self, x: f64) -> Vec<f64> {
        self.centers
            .iter()
            .zip(&self.widths)
            .map(|(&c, &h)| (-h * (x - c).powi(2)).exp())
            .collect()
    }

    /// Activations divided by their sum. Evaluated with the largest
    /// exponent factored out so the ratio survives underflow of every
    /// individual activation.
    pub fn normalized_activations(&self, x: f64) -> Vec<f64> {
        let exponents: Vec<f64> = self
            .centers
            .iter()
            .zip(&self.widths)
            .map(|(&c, &h)| -h * (x - c).powi(2))
            .collect();
        let peak = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = exponents.iter().map(|e| (e - peak).exp()).collect();
        let total: f64 = scaled.iter().sum();
        scaled.into_iter().map(|s| s / total).collect()
    }
}

/// Free-function form of [`BasisSet::activations`].
pub fn basis_activations(basis: &BasisSet, x: f64) -> Vec<f64> {
    basis.activations(x)
}

/// Point attractor for one task-space dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformationSystem {
    pub alpha_z: f64,
    pub beta_z: f64,
    pub goal: f64,
    pub start: f64,
    pub weights: Vec<f64>,
}

impl TransformationSystem {
    /// Critically damped system (`beta_z = alpha_z / 4`).
    pub fn critically_damped(alpha_z: f64, start: f64, goal: f64, weights: Vec<f64>) -> Self {
        Self {
            alpha_z,
            beta_z: alpha_z / 4.0,
            goal,
            start,
            weights,
        }
    }

    /// True when goal and start coincide, so the forcing term has no
    /// spatial scale and is held at zero.
    pub fn is_degenerate(&self) -> bool {
        self.goal == self.start
    }
}

/// Shared settings used when fitting a [`Dmp`] to a demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmpConfig {
    pub n_basis: usize,
    pub alpha_x: f64,
    pub alpha_z: f64,
    pub tau: f64,
}

impl Default for DmpConfig {
    fn default() -> Self {
        Self {
            n_basis: 50,
            alpha_x: DEFAULT_ALPHA_X,
            alpha_z: DEFAULT_ALPHA_Z,
            tau: 1.0,
        }
    }
}

/// Instantaneous integration state.
#[derive(Debug, Clone, PartialEq)]
pub struct DmpState {
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    pub ddy: Vec<f64>,
}

/// Uniformly sampled path with velocities and accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    /// Builds a trajectory from positions alone, differentiating with
    /// central differences (one-sided at the ends).
    pub fn from_positions(dt: f64, positions: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if positions.len() < 2 {
            return Err(invalid("trajectory needs at least two samples"));
        }
        let dims = positions[0].len();
        if dims == 0 || positions.iter().any(|p| p.len() != dims) {
            return Err(invalid("all samples must share a non-zero dimension"));
        }
        let dy = differentiate(&positions, dt);
        let ddy = differentiate(&dy, dt);
        let points = positions
            .into_iter()
            .zip(dy)
            .zip(ddy)
            .map(|((y, dy), ddy)| TrajectoryPoint { y, dy, ddy })
            .collect();
        Ok(Self { dt, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.points.first().map_or(0, |p| p.y.len())
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.points.len().saturating_sub(1) as f64
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(|p| p.y.as_slice())
    }

    /// Position at time `t`, linearly interpolated and clamped to the ends.
    pub fn position_at(&self, t: f64) -> Vec<f64> {
        let last = self.points.len() - 1;
        let s = (t / self.dt).clamp(0.0, last as f64);
        let i = (s.floor() as usize).min(last);
        if i == last {
            return self.points[last].y.clone();
        }
        let frac = s - i as f64;
        self.points[i]
            .y
            .iter()
            .zip(&self.points[i + 1].y)
            .map(|(a, b)| a + frac * (b - a))
            .collect()
    }
}

fn differentiate(series: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let n = series.len();
    (0..n)
        .map(|i| {
            let (lo, hi, span) = match i {
                0 => (0, 1, dt),
                _ if i == n - 1 => (n - 2, n - 1, dt),
                _ => (i - 1, i + 1, 2.0 * dt),
            };
            series[hi]
                .iter()
                .zip(&series[lo])
                .map(|(b, a)| (b - a) / span)
                .collect()
        })
        .collect()
}

/// A multi-dimensional movement primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct Dmp {
    canonical: CanonicalSystem,
    basis: BasisSet,
    systems: Vec<TransformationSystem>,
}

impl Dmp {
    pub fn new(
        canonical: CanonicalSystem,
        basis: BasisSet,
        systems: Vec<TransformationSystem>,
    ) -> Result<Self> {
        if systems.is_empty() {
            return Err(invalid("a DMP needs at least one dimension"));
        }
        if let Some(s) = systems.iter().find(|s| s.weights.len() != basis.len()) {
            return Err(invalid(format!(
                "transformation system has {} weights for {} basis functions",
                s.weights.len(),
                basis.len()
            )));
        }
        if systems.iter().any(|s| !(s.alpha_z > 0.0 && s.beta_z > 0.0)) {
            return Err(invalid("alpha_z and beta_z must be positive"));
        }
        for (d, s) in systems.iter().enumerate() {
            if s.is_degenerate() {
                log::warn!("dimension {d}: goal equals start, forcing term held at zero");
            }
        }
        Ok(Self {
            canonical: CanonicalSystem {
                x: 1.0,
                ..canonical
            },
            basis,
            systems,
        })
    }

    pub fn dims(&self) -> usize {
        self.systems.len()
    }

    pub fn canonical(&self) -> &CanonicalSystem {
        &self.canonical
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn systems(&self) -> &[TransformationSystem] {
        &self.systems
    }

    pub fn tau(&self) -> f64 {
        self.canonical.tau
    }

    pub fn start(&self) -> Vec<f64> {
        self.systems.iter().map(|s| s.start).collect()
    }

    pub fn goal(&self) -> Vec<f64> {
        self.systems.iter().map(|s| s.goal).collect()
    }

    /// Same weights and start, new goal.
    pub fn with_goal(&self, goal: &[f64]) -> Result<Self> {
        if goal.len() != self.dims() {
            return Err(invalid("goal dimension mismatch"));
        }
        let systems = self
            .systems
            .iter()
            .zip(goal)
            .map(|(s, &g)| TransformationSystem {
                goal: g,
                ..s.clone()
            })
            .collect();
        Self::new(self.canonical, self.basis.clone(), systems)
    }

    /// Same dynamics with a different temporal scale.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let canonical = CanonicalSystem::new(self.canonical.alpha_x, tau)?;
        Self::new(canonical, self.basis.clone(), self.systems.clone())
    }

    /// Forcing term of dimension `dim` at phase `x`.
    pub fn forcing_term(&self, x: f64, dim: usize) -> Result<f64> {
        if !(x > 0.0 && x <= 1.0) {
            return Err(invalid(format!("phase must lie in (0, 1], got {x}")));
        }
        if dim >= self.dims() {
            return Err(invalid(format!(
                "dimension {dim} out of range for a {}-D DMP",
                self.dims()
            )));
        }
        Ok(self.forcing(&self.basis.normalized_activations(x), x, dim))
    }

    fn forcing(&self, normalized: &[f64], x: f64, dim: usize) -> f64 {
        let sys = &self.systems[dim];
        if sys.is_degenerate() {
            return 0.0;
        }
        let blend: f64 = normalized
            .iter()
            .zip(&sys.weights)
            .map(|(p, w)| p * w)
            .sum();
        blend * x * (sys.goal - sys.start)
    }

    /// State at the start of a movement: at rest on the start position.
    pub fn initial_state(&self) -> DmpState {
        DmpState {
            y: self.start(),
            dy: vec![0.0; self.dims()],
            x: 1.0,
        }
    }

    fn accelerations(&self, state: &DmpState) -> Vec<f64> {
        let tau = self.canonical.tau;
        let normalized = self.basis.normalized_activations(state.x);
        self.systems
            .iter()
            .enumerate()
            .map(|(d, s)| {
                let f = self.forcing(&normalized, state.x, d);
                let spring = s.alpha_z * (s.beta_z * (s.goal - state.y[d]) - tau * state.dy[d]);
                (spring + f) / (tau * tau)
            })
            .collect()
    }

    /// One explicit Euler step of every transformation system and the
    /// phase, in lockstep.
    pub fn step(&self, state: &DmpState, dt: f64) -> Result<DmpState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if state.y.len() != self.dims() || state.dy.len() != self.dims() {
            return Err(invalid("state dimension mismatch"));
        }
        Ok(self.step_with(state, &self.accelerations(state), dt))
    }

    fn step_with(&self, state: &DmpState, ddy: &[f64], dt: f64) -> DmpState {
        let y = state
            .y
            .iter()
            .zip(&state.dy)
            .map(|(y, dy)| y + dt * dy)
            .collect();
        let dy = state
            .dy
            .iter()
            .zip(ddy)
            .map(|(dy, a)| dy + dt * a)
            .collect();
        let x = CanonicalSystem {
            x: state.x,
            ..self.canonical
        }
        .step_unchecked(dt)
        .x;
        DmpState { y, dy, x }
    }

    /// Integrates `horizon` Euler steps from the initial state. The result
    /// holds `horizon + 1` samples, the first being the start.
    pub fn rollout(&self, dt: f64, horizon: usize) -> Result<Trajectory> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        let mut points = Vec::with_capacity(horizon + 1);
        let mut state = self.initial_state();
        for _ in 0..horizon {
            let ddy = self.accelerations(&state);
            let next = self.step_with(&state, &ddy, dt);
            points.push(TrajectoryPoint {
                y: state.y,
                dy: state.dy,
                ddy,
            });
            state = next;
        }
        let ddy = self.accelerations(&state);
        points.push(TrajectoryPoint {
            y: state.y,
            dy: state.dy,
            ddy,
        });
        Ok(Trajectory { dt, points })
    }

    /// Fits one transformation system per demo dimension by per-basis
    /// locally weighted regression on the forcing targets implied by the
    /// demo's position, velocity and acceleration.
    pub fn fit(demo: &Trajectory, config: &DmpConfig) -> Result<Self> {
        let n = config.n_basis;
        if n == 0 {
            return Err(invalid("n_basis must be at least 1"));
        }
        if demo.len() < 2 * n {
            return Err(invalid(format!(
                "demo has {} samples, need at least {} for {} basis functions",
                demo.len(),
                2 * n,
                n
            )));
        }
        if !(demo.duration() > 0.0) {
            return Err(invalid("demo duration must be positive"));
        }
        if !(config.alpha_z > 0.0) {
            return Err(invalid("alpha_z must be positive"));
        }
        let canonical = CanonicalSystem::new(config.alpha_x, config.tau)?;
        let basis = BasisSet::spaced(n, config.alpha_x)?;
        let tau = config.tau;
        let alpha_z = config.alpha_z;
        let beta_z = alpha_z / 4.0;

        let phases: Vec<f64> = (0..demo.len())
            .map(|k| canonical.phase_at(k as f64 * demo.dt))
            .collect();
        let activations: Vec<Vec<f64>> = phases.iter().map(|&x| basis.activations(x)).collect();

        let first = &demo.points[0].y;
        let last = &demo.points[demo.len() - 1].y;
        let systems = (0..demo.dims())
            .map(|d| {
                let (start, goal) = (first[d], last[d]);
                let scale = goal - start;
                let mut num = vec![0.0; n];
                let mut den = vec![0.0; n];
                for ((p, &x), psi) in demo.points.iter().zip(&phases).zip(&activations) {
                    let target =
                        tau * tau * p.ddy[d] - alpha_z * (beta_z * (goal - p.y[d]) - tau * p.dy[d]);
                    let s = x * scale;
                    for i in 0..n {
                        num[i] += psi[i] * s * target;
                        den[i] += psi[i] * s * s;
                    }
                }
                let weights = num
                    .iter()
                    .zip(&den)
                    .map(|(a, b)| a / (b + LWR_RIDGE))
                    .collect();
                TransformationSystem {
                    alpha_z,
                    beta_z,
                    goal,
                    start,
                    weights,
                }
            })
            .collect();
        Self::new(canonical, basis, systems)
    }

    pub fn to_json(&self) -> Result<String> {
        format::to_precise_json(&DmpDocument::from(self))
            .map_err(|e| DmpError::Document(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DmpDocument =
            serde_json::from_str(text).map_err(|e| DmpError::Document(e.to_string()))?;
        doc.try_into()
    }
}

/// Free-function form of [`Dmp::fit`].
pub fn fit_dmp(demo: &Trajectory, config: &DmpConfig) -> Result<Dmp> {
    Dmp::fit(demo, config)
}

/// Serialized form of a [`Dmp`]; field order is part of the file format.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DmpDocument {
    alpha_x: f64,
    tau: f64,
    alpha_z: f64,
    beta_z: f64,
    #[serde(rename = "N")]
    n: usize,
    centers: Vec<f64>,
    widths: Vec<f64>,
    dims: usize,
    per_dim: Vec<DimDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimDocument {
    g: f64,
    y0: f64,
    weights: Vec<f64>,
}

impl From<&Dmp> for DmpDocument {
    fn from(dmp: &Dmp) -> Self {
        // all systems share gains when built through `fit`
        let first = &dmp.systems[0];
        Self {
            alpha_x: dmp.canonical.alpha_x,
            tau: dmp.canonical.tau,
            alpha_z: first.alpha_z,
            beta_z: first.beta_z,
            n: dmp.basis.len(),
            centers: dmp.basis.centers.clone(),
            widths: dmp.basis.widths.clone(),
            dims: dmp.dims(),
            per_dim: dmp
                .systems
                .iter()
                .map(|s| DimDocument {
                    g: s.goal,
                    y0: s.start,
                    weights: s.weights.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<DmpDocument> for Dmp {
    type Error = DmpError;

    fn try_from(doc: DmpDocument) -> Result<Self> {
        if doc.n != doc.centers.len() {
            return Err(DmpError::Document(format!(
                "N = {} but {} centers",
                doc.n,
                doc.centers.len()
            )));
        }
        if doc.dims != doc.per_dim.len() {
            return Err(DmpError::Document(format!(
                "dims = {} but {} per-dimension entries",
                doc.dims,
                doc.per_dim.len()
            )));
        }
        let canonical = CanonicalSystem::new(doc.alpha_x, doc.tau)?;
        let basis = BasisSet::new(doc.centers, doc.widths)?;
        let systems = doc
            .per_dim
            .into_iter()
            .map(|d| TransformationSystem {
                alpha_z: doc.alpha_z,
                beta_z: doc.beta_z,
                goal: d.g,
                start: d.y0,
                weights: d.weights,
            })
            .collect();
        Dmp::new(canonical, basis, systems)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_dim(weights: Vec<f64>, start: f64, goal: f64) -> Dmp {
        let basis = BasisSet::spaced(weights.len(), DEFAULT_ALPHA_X).unwrap();
        let cs = CanonicalSystem::new(DEFAULT_ALPHA_X, 1.0).unwrap();
        Dmp::new(
            cs,
            basis,
            vec![TransformationSystem::critically_damped(
                DEFAULT_ALPHA_Z,
                start,
                goal,
                weights,
            )],
        )
        .unwrap()
    }

    #[test]
    fn canonical_single_step() {
        let cs = CanonicalSystem::new(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(cs.step(0.01).unwrap().x, 0.99, epsilon = 1e-15);
    }

    #[test]
    fn canonical_integrates_to_closed_form() {
        let mut cs = CanonicalSystem::new(4.6, 1.0).unwrap();
        for _ in 0..1000 {
            cs = cs.step(1e-3).unwrap();
        }
        assert_abs_diff_eq!(cs.x, (-4.6_f64).exp(), epsilon = 1e-3);
    }

    #[test]
    fn canonical_rejects_non_positive_dt() {
        let cs = CanonicalSystem::new(1.0, 1.0).unwrap();
        assert!(matches!(cs.step(0.0), Err(DmpError::InvalidArgument(_))));
        assert!(cs.step(-1e-3).is_err());
    }

    #[test]
    fn canonical_clamps_large_steps() {
        let cs = CanonicalSystem::new(4.6, 1.0).unwrap();
        assert!(cs.step(10.0).unwrap().x > 0.0);
    }

    #[test]
    fn activation_peaks_at_center() {
        let basis = BasisSet::spaced(10, DEFAULT_ALPHA_X).unwrap();
        let c = basis.centers()[3];
        assert_eq!(basis.activations(c)[3], 1.0);
    }

    #[test]
    fn narrow_basis_vanishes_away_from_center() {
        let basis = BasisSet::new(vec![0.5], vec![1e6]).unwrap();
        assert!(basis.activations(0.9)[0] < 1e-100);
    }

    #[test]
    fn explicit_basis_activations() {
        let basis = BasisSet::new(vec![1.0, 0.5, 0.1], vec![4.0; 3]).unwrap();
        let psi = basis.activations(0.5);
        assert_abs_diff_eq!(psi[0], (-1.0_f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(psi[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(psi[2], (-0.64_f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn basis_rejects_bad_layouts() {
        assert!(BasisSet::new(vec![0.5, 0.7], vec![1.0, 1.0]).is_err());
        assert!(BasisSet::new(vec![1.2], vec![1.0]).is_err());
        assert!(BasisSet::new(vec![0.5], vec![0.0]).is_err());
        assert!(BasisSet::new(vec![], vec![]).is_err());
    }

    #[test]
    fn spaced_basis_layout() {
        let basis = BasisSet::spaced(5, 4.6).unwrap();
        assert_abs_diff_eq!(basis.centers()[0], 1.0);
        assert_abs_diff_eq!(basis.centers()[4], (-4.6_f64).exp(), epsilon = 1e-15);
        let w = basis.widths();
        assert_eq!(w[3], w[4]);
        let gap = basis.centers()[1] - basis.centers()[0];
        assert_abs_diff_eq!(w[0], 1.0 / (gap * gap), epsilon = 1e-9);
    }

    #[test]
    fn zero_weights_give_zero_forcing() {
        let dmp = one_dim(vec![0.0; 8], 0.0, 1.0);
        for &x in &[1.0, 0.5, 1e-3] {
            assert_eq!(dmp.forcing_term(x, 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn forcing_vanishes_with_phase() {
        let dmp = one_dim(vec![3.0, -2.0, 5.0, 1.0], 0.0, 1.0);
        assert!(dmp.forcing_term(1e-9, 0).unwrap().abs() < 1e-7);
    }

    #[test]
    fn unit_weights_collapse_normalization() {
        let dmp = one_dim(vec![1.0; 12], 0.2, 0.7);
        for &x in &[1.0, 0.6, 0.05] {
            assert_abs_diff_eq!(dmp.forcing_term(x, 0).unwrap(), x * 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_goal_yields_zero_forcing() {
        let dmp = one_dim(vec![5.0; 4], 0.3, 0.3);
        assert!(dmp.systems()[0].is_degenerate());
        assert_eq!(dmp.forcing_term(0.5, 0).unwrap(), 0.0);
        let traj = dmp.rollout(1e-3, 1000).unwrap();
        assert!(traj.points.iter().all(|p| (p.y[0] - 0.3).abs() < 1e-12));
    }

    #[test]
    fn forcing_term_checks_arguments() {
        let dmp = one_dim(vec![0.0; 4], 0.0, 1.0);
        assert!(dmp.forcing_term(0.0, 0).is_err());
        assert!(dmp.forcing_term(1.5, 0).is_err());
        assert!(dmp.forcing_term(0.5, 1).is_err());
    }

    #[test]
    fn zero_forcing_converges_to_goal() {
        let dmp = one_dim(vec![0.0; 10], 0.1, 0.6);
        let traj = dmp.rollout(1e-3, 3000).unwrap();
        let end = traj.points.last().unwrap().y[0];
        assert!((end - 0.6).abs() < 1e-3 * 0.5);
    }

    #[test]
    fn stepping_reproduces_rollout() {
        let dmp = one_dim(vec![4.0, -3.0, 2.0, 0.5, -1.0], -0.2, 0.4);
        let traj = dmp.rollout(1e-3, 700).unwrap();
        let mut state = dmp.initial_state();
        for point in &traj.points {
            assert_eq!(state.y, point.y);
            assert_eq!(state.dy, point.dy);
            state = dmp.step(&state, 1e-3).unwrap();
        }
    }

    #[test]
    fn step_rejects_zero_dt() {
        let dmp = one_dim(vec![0.0; 3], 0.0, 1.0);
        let state = dmp.initial_state();
        assert!(dmp.step(&state, 0.0).is_err());
    }

    #[test]
    fn goal_is_a_fixed_point() {
        let dmp = one_dim(vec![2.0; 6], 0.0, 1.0);
        let mut state = DmpState {
            y: vec![1.0],
            dy: vec![0.0],
            x: 1e-12,
        };
        for _ in 0..2000 {
            state = dmp.step(&state, 1e-3).unwrap();
        }
        assert!((state.y[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_rejects_short_demo() {
        let demo = Trajectory {
            dt: 0.01,
            points: vec![TrajectoryPoint {
                y: vec![0.0],
                dy: vec![0.0],
                ddy: vec![0.0],
            }],
        };
        assert!(matches!(
            Dmp::fit(&demo, &DmpConfig::default()),
            Err(DmpError::InvalidArgument(_))
        ));
        assert!(Trajectory::from_positions(0.01, vec![vec![0.0]]).is_err());
    }

    #[test]
    fn straight_line_demo_reaches_goal() {
        let n = 1001;
        let dt = 1e-3;
        let positions: Vec<Vec<f64>> = (0..n).map(|k| vec![0.25 * k as f64 * dt]).collect();
        let demo = Trajectory::from_positions(dt, positions).unwrap();
        let config = DmpConfig {
            n_basis: 20,
            ..DmpConfig::default()
        };
        let dmp = Dmp::fit(&demo, &config).unwrap();
        let traj = dmp.rollout(dt, 5000).unwrap();
        let end = traj.points.last().unwrap().y[0];
        assert!((end - 0.25).abs() < 1e-3 * 0.25, "end {end}");
    }

    #[test]
    fn json_round_trip_is_exact() {
        let dmp = one_dim(vec![0.1, -2.0 / 3.0, std::f64::consts::E], 0.01, -0.02);
        let text = dmp.to_json().unwrap();
        let back = Dmp::from_json(&text).unwrap();
        assert_eq!(back, dmp);
        let keys = [
            "alpha_x", "tau", "alpha_z", "beta_z", "\"N\"", "centers", "widths", "dims", "per_dim",
        ];
        let positions: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn json_rejects_inconsistent_counts() {
        let dmp = one_dim(vec![0.0; 3], 0.0, 1.0);
        let text = dmp.to_json().unwrap().replace("\"dims\": 1", "\"dims\": 2");
        assert!(matches!(Dmp::from_json(&text), Err(DmpError::Document(_))));
    }
}
