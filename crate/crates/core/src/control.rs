//! Probability-driven trajectory modulation and trial execution.
//!
//! Each step the nominal Cartesian point is offset by
//! `kappa * u_t * (Pr(peel) - 0.5)`, pushing the knife away from the peel
//! when the classifier leans towards peel and towards the boundary when it
//! leans towards pulp. Offsets are not accumulated: every step starts from
//! the nominal point.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{feature_vector, LogisticModel};
use crate::dmp::{Dmp, DmpError};
use crate::world::{
    step_world, ContactResult, IkOptions, Medium, MediumWorld, PlanarArm, Point, WorldError,
};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("closed-loop execution needs both a probability model and a gain schedule")]
    MissingController,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trial aborted at step {step} with the tip in the pulp: {source}")]
    Aborted { step: usize, source: WorldError },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Dmp(#[from] DmpError),
}

type Result<T> = std::result::Result<T, ControlError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    OpenLoop,
    ClosedLoop,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::OpenLoop => "open",
            Mode::ClosedLoop => "closed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "open" => Some(Mode::OpenLoop),
            "closed" => Some(Mode::ClosedLoop),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    StuckInPeel,
    IncompleteExtraction,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "Success",
            Outcome::StuckInPeel => "StuckInPeel",
            Outcome::IncompleteExtraction => "IncompleteExtraction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Success" => Some(Outcome::Success),
            "StuckInPeel" => Some(Outcome::StuckInPeel),
            "IncompleteExtraction" => Some(Outcome::IncompleteExtraction),
            _ => None,
        }
    }
}

/// Per-step directional gain `K_t = kappa * u_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub kappa: f64,
    pub half_split: usize,
    directions: Vec<Point>,
}

impl GainSchedule {
    /// Directions for a nominal path: towards `center` before `half_split`,
    /// straight up (`+y`) from `half_split` on.
    pub fn for_path(
        kappa: f64,
        half_split: usize,
        center: Point,
        nominal: &[Point],
    ) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(ControlError::InvalidArgument(format!(
                "kappa must be non-negative, got {kappa}"
            )));
        }
        let directions = nominal
            .iter()
            .enumerate()
            .map(|(t, p)| {
                let inward = center - p;
                if t < half_split && inward.norm() > 0.0 {
                    inward.normalize()
                } else {
                    Point::y()
                }
            })
            .collect();
        Ok(Self {
            kappa,
            half_split,
            directions,
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn direction(&self, t: usize) -> Point {
        self.directions[t]
    }
}

/// Offset added to nominal point `t` for a peel probability `pr_peel`.
pub fn correction(pr_peel: f64, t: usize, schedule: &GainSchedule) -> Point {
    schedule.direction(t) * (schedule.kappa * (pr_peel - 0.5))
}

/// What the controller sees after a world step.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub time_index: usize,
    pub torques: &'a [f64],
    pub contact: &'a ContactResult,
}

/// Source of Pr(peel) estimates.
pub trait PeelEstimator: Sync {
    fn pr_peel(&self, obs: &Observation<'_>) -> f64;
}

impl PeelEstimator for LogisticModel {
    fn pr_peel(&self, obs: &Observation<'_>) -> f64 {
        self.predict_proba(&feature_vector(obs.torques, obs.time_index))
    }
}

/// Always answers the same probability.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEstimator(pub f64);

impl PeelEstimator for ConstantEstimator {
    fn pr_peel(&self, _: &Observation<'_>) -> f64 {
        self.0
    }
}

/// Ground truth: 1 in the peel, 0 in the pulp.
#[derive(Debug, Clone, Copy, Default)]
pub struct InPeelOracle;

impl PeelEstimator for InPeelOracle {
    fn pr_peel(&self, obs: &Observation<'_>) -> f64 {
        match obs.contact.medium {
            Medium::Peel => 1.0,
            Medium::Pulp => 0.0,
        }
    }
}

/// Nominal Cartesian path sampled at the sensing snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalPlan {
    /// Insertion pose; the tip rests here before the first step.
    pub start: Point,
    /// One commanded point per snapshot.
    pub points: Vec<Point>,
    /// Time between snapshots.
    pub segment_dt: f64,
}

impl NominalPlan {
    /// Rolls `dmp` out at `rollout_dt` over one movement (`tau`) and samples
    /// it at the ends of `segments` equal segments.
    pub fn from_dmp(dmp: &Dmp, segments: usize, rollout_dt: f64) -> Result<Self> {
        if dmp.dims() != 2 {
            return Err(ControlError::InvalidArgument(format!(
                "planar plan needs a 2-D DMP, got {} dimensions",
                dmp.dims()
            )));
        }
        if segments == 0 {
            return Err(ControlError::InvalidArgument(
                "need at least one segment".into(),
            ));
        }
        let duration = dmp.tau();
        let horizon = (duration / rollout_dt).round() as usize;
        let traj = dmp.rollout(rollout_dt, horizon)?;
        let segment_dt = duration / segments as f64;
        let to_point = |v: Vec<f64>| Point::new(v[0], v[1]);
        let points = (1..=segments)
            .map(|k| to_point(traj.position_at(k as f64 * segment_dt)))
            .collect();
        Ok(Self {
            start: to_point(dmp.start()),
            points,
            segment_dt,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn goal(&self) -> Point {
        *self.points.last().unwrap_or(&self.start)
    }
}

/// Thresholds turning a path into a task outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeCriteria {
    /// Penetration into the peel (m) beyond which the knife is stuck.
    pub d_stuck: f64,
    /// Depth into the pulp (m) still counted as cutting along the boundary.
    pub d_margin: f64,
    /// Minimum fraction of steps inside the boundary band.
    pub coverage_min: f64,
    /// Allowed endpoint miss (m) relative to the nominal goal.
    pub goal_tol: f64,
}

impl Default for JudgeCriteria {
    fn default() -> Self {
        Self {
            d_stuck: 0.003,
            d_margin: 0.005,
            coverage_min: 0.7,
            goal_tol: 0.005,
        }
    }
}

/// Complete log of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub seed: u64,
    pub mode: Mode,
    pub nominal_path: Vec<Point>,
    /// Commanded points `y'_t`; the arm reaches each within IK tolerance.
    pub corrected_path: Vec<Point>,
    /// Joint torques per step.
    pub torques: Vec<Vec<f64>>,
    pub pr_trace: Vec<f64>,
    pub signed_distance: Vec<f64>,
    /// Step at which inverse kinematics failed with the tip in the peel.
    pub aborted_at: Option<usize>,
    pub outcome: Outcome,
}

impl TrialRecord {
    pub fn steps(&self) -> usize {
        self.corrected_path.len()
    }

    /// Deepest excursion into the peel (m); negative if the tip stayed in
    /// the pulp throughout.
    pub fn max_signed_distance(&self) -> f64 {
        self.signed_distance
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Deepest excursion into the peel, or 0 if the peel was never entered.
    pub fn max_peel_penetration(&self) -> f64 {
        self.max_signed_distance().max(0.0)
    }
}

/// Everything about a trial that does not change between modes.
#[derive(Debug, Clone, Copy)]
pub struct TrialSetup<'a> {
    pub plan: &'a NominalPlan,
    pub world: &'a MediumWorld,
    /// Arm posture before insertion.
    pub arm: &'a PlanarArm,
    pub ik: IkOptions,
    pub criteria: JudgeCriteria,
}

/// Runs one trial. In closed loop the Pr(peel) sensed at step `t - 1`
/// drives the correction at step `t`; the first step is uncorrected.
/// A supplied estimator is also evaluated in open loop, for logging only.
pub fn run_trial(
    setup: &TrialSetup<'_>,
    estimator: Option<&dyn PeelEstimator>,
    schedule: Option<&GainSchedule>,
    mode: Mode,
    trial_id: u64,
    seed: u64,
) -> Result<TrialRecord> {
    let plan = setup.plan;
    let controller = match mode {
        Mode::ClosedLoop => match (estimator, schedule) {
            (Some(e), Some(s)) => Some((e, s)),
            _ => return Err(ControlError::MissingController),
        },
        Mode::OpenLoop => None,
    };
    if let Some((_, s)) = controller {
        if s.len() != plan.len() {
            return Err(ControlError::InvalidArgument(format!(
                "gain schedule has {} steps for a {}-step plan",
                s.len(),
                plan.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let insertion = setup.arm.ik(&plan.start, &setup.ik)?;
    let mut arm = PlanarArm {
        joint_angles: insertion,
        ..setup.arm.clone()
    };

    let n = plan.len();
    let mut record = TrialRecord {
        trial_id,
        seed,
        mode,
        nominal_path: Vec::with_capacity(n),
        corrected_path: Vec::with_capacity(n),
        torques: Vec::with_capacity(n),
        pr_trace: Vec::with_capacity(n),
        signed_distance: Vec::with_capacity(n),
        aborted_at: None,
        outcome: Outcome::Success,
    };
    let mut last_medium = setup.world.medium_at(&plan.start).medium;
    let mut pr_prev = 0.5;
    for (t, nominal) in plan.points.iter().enumerate() {
        let commanded = match controller {
            Some((_, schedule)) => nominal + correction(pr_prev, t, schedule),
            None => *nominal,
        };
        let step = match step_world(
            setup.world,
            &arm,
            &commanded,
            plan.segment_dt,
            &setup.ik,
            &mut rng,
        ) {
            Ok(s) => s,
            Err(e) if last_medium == Medium::Peel => {
                log::debug!("trial {trial_id}: stuck at step {t}: {e}");
                record.aborted_at = Some(t);
                record.outcome = Outcome::StuckInPeel;
                return Ok(record);
            }
            Err(source) => return Err(ControlError::Aborted { step: t, source }),
        };
        let obs = Observation {
            time_index: t,
            torques: &step.torques,
            contact: &step.contact,
        };
        let pr = estimator.map_or(0.5, |e| e.pr_peel(&obs));
        record.nominal_path.push(*nominal);
        record.corrected_path.push(commanded);
        record.signed_distance.push(step.contact.signed_distance);
        record.pr_trace.push(pr);
        record.torques.push(step.torques);
        last_medium = step.contact.medium;
        pr_prev = pr;
        arm = step.arm;
    }
    record.outcome = judge_outcome(&record, setup.world, &setup.criteria);
    Ok(record)
}

/// Classifies a finished trial from its path and the world it ran in.
pub fn judge_outcome(
    record: &TrialRecord,
    world: &MediumWorld,
    criteria: &JudgeCriteria,
) -> Outcome {
    if record.aborted_at.is_some() {
        return Outcome::StuckInPeel;
    }
    let Some(endpoint) = record.corrected_path.last() else {
        return Outcome::IncompleteExtraction;
    };
    let distances: Vec<f64> = record
        .corrected_path
        .iter()
        .map(|p| world.medium_at(p).signed_distance)
        .collect();
    if distances.iter().any(|&d| d > criteria.d_stuck) {
        return Outcome::StuckInPeel;
    }
    let in_band = distances
        .iter()
        .filter(|&&d| d >= -criteria.d_margin && d < criteria.d_stuck)
        .count();
    let coverage = in_band as f64 / distances.len() as f64;
    let goal = record.nominal_path.last().unwrap_or(endpoint);
    if coverage < criteria.coverage_min || (endpoint - goal).norm() > criteria.goal_tol {
        return Outcome::IncompleteExtraction;
    }
    Outcome::Success
}
