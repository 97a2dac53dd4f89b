//! Experiment configuration, stored as JSON.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::classifier::TrainConfig;
use crate::control::JudgeCriteria;
use crate::dmp::{DmpConfig, DEFAULT_ALPHA_X, DEFAULT_ALPHA_Z};
use crate::format;
use crate::world::{IkOptions, MediumWorld, PlanarArm};

/// Closed interval `[lo, hi]`, written as a two-element array.
pub type Range = [f64; 2];

fn draw<R: Rng + ?Sized>(rng: &mut R, range: Range) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// How each trial's world departs from the prior world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldRandomization {
    /// Added to the prior base radius (m).
    pub radius_offset: Range,
    /// Shift of the world center along each axis (m).
    pub center_offset: Range,
    /// Magnitude range of each harmonic, lowest order first (m). Phases are
    /// uniform on the circle.
    pub amplitudes: Vec<Range>,
    pub mu_pulp: Range,
    pub mu_peel: Range,
    pub noise_sigma: Range,
}

impl WorldRandomization {
    /// Draws a world around `prior`. The prior's own perturbation terms are
    /// replaced.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        prior: &MediumWorld,
        seed: u64,
        rng: &mut R,
    ) -> MediumWorld {
        let radius = prior.base_radius + draw(rng, self.radius_offset);
        let center = [
            prior.center[0] + draw(rng, self.center_offset),
            prior.center[1] + draw(rng, self.center_offset),
        ];
        let mut amplitudes = Vec::with_capacity(self.amplitudes.len());
        let mut phases = Vec::with_capacity(self.amplitudes.len());
        for &range in &self.amplitudes {
            amplitudes.push(draw(rng, range));
            phases.push(rng.random_range(0.0..std::f64::consts::TAU));
        }
        MediumWorld {
            center,
            base_radius: radius,
            amplitudes,
            phases,
            mu_pulp: draw(rng, self.mu_pulp),
            mu_peel: draw(rng, self.mu_peel),
            peel_penalty: prior.peel_penalty,
            noise_sigma: draw(rng, self.noise_sigma),
            seed,
        }
    }

    fn ranges(&self) -> impl Iterator<Item = (&'static str, Range)> + '_ {
        [
            ("radius_offset", self.radius_offset),
            ("center_offset", self.center_offset),
            ("mu_pulp", self.mu_pulp),
            ("mu_peel", self.mu_peel),
            ("noise_sigma", self.noise_sigma),
        ]
        .into_iter()
        .chain(self.amplitudes.iter().map(|&r| ("amplitudes", r)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub link_lengths: Vec<f64>,
    pub base: [f64; 2],
    /// Posture before insertion.
    pub home_angles: Vec<f64>,
}

impl ArmConfig {
    pub fn arm(&self) -> Result<PlanarArm, HarnessError> {
        Ok(PlanarArm::new(
            self.link_lengths.clone(),
            self.home_angles.clone(),
            self.base,
        )?)
    }
}

/// Scripted demonstration along the prior boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    /// Polar angle of the insertion pose (rad).
    pub start_angle: f64,
    /// Polar angle of the extraction pose (rad).
    pub end_angle: f64,
    /// Depth inside the prior boundary at which the demo cuts (m).
    pub inset: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmpSettings {
    pub n_basis: usize,
    pub alpha_x: f64,
    pub alpha_z: f64,
    pub tau: f64,
    pub rollout_dt: f64,
}

impl DmpSettings {
    pub fn dmp_config(&self) -> DmpConfig {
        DmpConfig {
            n_basis: self.n_basis,
            alpha_x: self.alpha_x,
            alpha_z: self.alpha_z,
            tau: self.tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub folds: usize,
    /// Fraction of kept traces held out for testing.
    pub holdout_fraction: f64,
}

impl ClassifierConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    /// Offset (m) per unit of `Pr(peel) - 0.5`.
    pub kappa: f64,
    /// First step that is modulated upwards instead of towards the center.
    pub half_split: usize,
    pub criteria: JudgeCriteria,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Open-loop trials used to build the classifier dataset.
    pub n_collect: usize,
    /// Paired trials per mode in the comparison.
    pub n_compare: usize,
    /// Torque snapshots per trial.
    pub segments: usize,
    /// Prior world: the geometry the demonstration is scripted on.
    pub world: MediumWorld,
    pub randomization: WorldRandomization,
    pub arm: ArmConfig,
    pub ik: IkOptions,
    pub demo: DemoConfig,
    pub dmp: DmpSettings,
    pub classifier: ClassifierConfig,
    pub controller: ControllerConfig,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 2020,
            n_collect: 111,
            n_compare: 200,
            segments: 24,
            world: MediumWorld {
                center: [0.0, 0.0],
                base_radius: 0.04,
                amplitudes: Vec::new(),
                phases: Vec::new(),
                mu_pulp: 5.0,
                mu_peel: 15.0,
                peel_penalty: 3000.0,
                noise_sigma: 0.009,
                seed: 0,
            },
            randomization: WorldRandomization {
                radius_offset: [-0.003, 0.0],
                center_offset: [-0.001, 0.001],
                amplitudes: vec![[0.0, 0.002], [0.0, 0.003], [0.0, 0.003], [0.0, 0.003]],
                mu_pulp: [4.0, 6.0],
                mu_peel: [12.0, 18.0],
                noise_sigma: [0.009, 0.009],
            },
            arm: ArmConfig {
                link_lengths: vec![0.15, 0.12, 0.08],
                base: [0.0, 0.25],
                home_angles: vec![-1.2, -0.9, -0.7],
            },
            ik: IkOptions::default(),
            demo: DemoConfig {
                start_angle: std::f64::consts::PI,
                end_angle: 1.5 * std::f64::consts::PI,
                inset: 0.001,
                dt: 1e-3,
            },
            dmp: DmpSettings {
                n_basis: 50,
                alpha_x: DEFAULT_ALPHA_X,
                alpha_z: DEFAULT_ALPHA_Z,
                tau: 1.0,
                rollout_dt: 1e-3,
            },
            classifier: ClassifierConfig {
                lambda: 1000.0,
                learning_rate: 0.1,
                max_iters: 5000,
                tol: 1e-6,
                folds: 10,
                holdout_fraction: 21.0 / 111.0,
            },
            controller: ControllerConfig {
                kappa: 0.02,
                half_split: 12,
                criteria: JudgeCriteria::default(),
            },
            output_dir: "out".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        format::to_precise_json(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_collect == 0 || self.n_compare == 0 {
            return bad("trial counts must be at least 1".into());
        }
        if self.segments == 0 {
            return bad("segments must be at least 1".into());
        }
        self.world
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let r = &self.randomization;
        for (name, range) in r.ranges() {
            if !(range[0] <= range[1] && range.iter().all(|v| v.is_finite())) {
                return bad(format!("range {name} = {range:?} is empty"));
            }
        }
        if r.amplitudes.iter().any(|a| a[0] < 0.0) {
            return bad("amplitude magnitudes must be non-negative".into());
        }
        let max_spread: f64 = r.amplitudes.iter().map(|a| a[1]).sum();
        if self.world.base_radius + r.radius_offset[0] - max_spread <= 0.0 {
            return bad("randomized boundary can reach non-positive radius".into());
        }
        if r.mu_pulp[0] <= 0.0 || r.mu_peel[0] <= r.mu_pulp[1] {
            return bad("randomized mu ranges must keep mu_peel > mu_pulp > 0".into());
        }
        if r.noise_sigma[0] < 0.0 {
            return bad("noise sigma must be non-negative".into());
        }
        self.arm.arm()?;
        if self.demo.end_angle == self.demo.start_angle || !(self.demo.dt > 0.0) {
            return bad("demo needs distinct start/end angles and a positive dt".into());
        }
        if !(self.demo.inset >= 0.0 && self.demo.inset < self.world.base_radius) {
            return bad("demo inset must lie inside the prior boundary".into());
        }
        let d = &self.dmp;
        if d.n_basis == 0
            || !(d.alpha_x > 0.0 && d.alpha_z > 0.0 && d.tau > 0.0 && d.rollout_dt > 0.0)
        {
            return bad("DMP settings must be positive".into());
        }
        let c = &self.classifier;
        if c.folds < 2 || !(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0) {
            return bad("classifier needs >= 2 folds and a holdout fraction in (0, 1)".into());
        }
        if !(c.lambda >= 0.0 && c.learning_rate > 0.0 && c.tol > 0.0) {
            return bad("classifier hyperparameters out of range".into());
        }
        let k = &self.controller;
        if !(k.kappa >= 0.0) || k.half_split > self.segments {
            return bad("controller needs kappa >= 0 and half_split <= segments".into());
        }
        let j = &k.criteria;
        if !(j.d_stuck > 0.0 && j.d_margin > 0.0 && j.goal_tol > 0.0)
            || !(0.0..=1.0).contains(&j.coverage_min)
        {
            return bad("judge thresholds out of range".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let config = ExperimentConfig::default();
        let back = ExperimentConfig::from_json(&config.to_json().unwrap()).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn empty_range_rejected() {
        let mut config = ExperimentConfig::default();
        config.randomization.mu_pulp = [6.0, 4.0];
        assert!(matches!(config.validate(), Err(HarnessError::Config(_))));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text =
            ExperimentConfig::default()
                .to_json()
                .unwrap()
                .replacen('{', "{\"bogus\": 1,", 1);
        assert!(ExperimentConfig::from_json(&text).is_err());
    }
}
