//! Data collection, classifier training and the open/closed comparison.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::records::{self, StoredTrial, WorldEntry};
use super::{demo, derive_seed, write_file, HarnessError, Stream};
use crate::classifier::{
    kfold_cv, train, Confusion, CrossValidation, Label, LogisticModel, Metrics, Sample,
    TorqueTrace, TrainReport,
};
use crate::control::{
    judge_outcome, run_trial, GainSchedule, Mode, NominalPlan, Outcome, PeelEstimator, TrialRecord,
    TrialSetup,
};
use crate::dmp::{Dmp, Trajectory};
use crate::format;
use crate::world::{MediumWorld, PlanarArm};

/// Fixed pieces shared by every trial of an experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub demo: Trajectory,
    pub dmp: Dmp,
    pub plan: NominalPlan,
    pub schedule: GainSchedule,
    pub arm: PlanarArm,
}

/// Open-loop trials and the dataset built from them.
#[derive(Debug, Clone)]
pub struct Collection {
    pub records: Vec<TrialRecord>,
    pub worlds: Vec<MediumWorld>,
}

impl Collection {
    /// Complete trials with a binary outcome, labelled by that outcome.
    pub fn traces(&self, segments: usize) -> Vec<TorqueTrace> {
        self.kept(segments)
            .map(|r| TorqueTrace {
                trial_id: r.trial_id,
                torques: r.torques.clone(),
                label: label_of(r.outcome).unwrap(),
            })
            .collect()
    }

    pub fn kept(&self, segments: usize) -> impl Iterator<Item = &TrialRecord> {
        self.records
            .iter()
            .filter(move |r| r.steps() == segments && label_of(r.outcome).is_some())
    }

    pub fn balance(&self, segments: usize) -> DatasetBalance {
        let mut b = DatasetBalance::default();
        for r in &self.records {
            match r.outcome {
                Outcome::IncompleteExtraction => b.excluded += 1,
                _ if r.steps() != segments => b.excluded += 1,
                Outcome::Success => b.pulp += 1,
                Outcome::StuckInPeel => b.peel += 1,
            }
        }
        b
    }
}

fn label_of(outcome: Outcome) -> Option<Label> {
    match outcome {
        Outcome::Success => Some(Label::Pulp),
        Outcome::StuckInPeel => Some(Label::Peel),
        Outcome::IncompleteExtraction => None,
    }
}

/// Class counts of a collected dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetBalance {
    pub pulp: usize,
    pub peel: usize,
    /// Trials left out of the dataset: incomplete extractions, and stuck
    /// trials that stopped before the last snapshot.
    pub excluded: usize,
}

impl DatasetBalance {
    pub fn kept(&self) -> usize {
        self.pulp + self.peel
    }

    pub fn peel_fraction(&self) -> f64 {
        if self.kept() == 0 {
            0.0
        } else {
            self.peel as f64 / self.kept() as f64
        }
    }
}

/// Result of the trace-level split, cross-validation and final fit.
#[derive(Debug, Clone)]
pub struct Training {
    pub model: LogisticModel,
    pub report: TrainReport,
    pub cv: CrossValidation,
    pub test: Metrics,
    pub train_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
}

/// Paired open- and closed-loop trials; `open[i]` and `closed[i]` share
/// `worlds[i]`.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub open: Vec<TrialRecord>,
    pub closed: Vec<TrialRecord>,
    pub worlds: Vec<MediumWorld>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub trials: usize,
    pub successful: usize,
    pub failed: usize,
    pub stuck: usize,
    pub incomplete: usize,
    pub success_rate: f64,
}

impl ModeSummary {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let count = |o: Outcome| records.iter().filter(|r| r.outcome == o).count();
        let successful = count(Outcome::Success);
        let trials = records.len();
        Self {
            trials,
            successful,
            failed: trials - successful,
            stuck: count(Outcome::StuckInPeel),
            incomplete: count(Outcome::IncompleteExtraction),
            success_rate: if trials == 0 {
                0.0
            } else {
                successful as f64 / trials as f64
            },
        }
    }
}

/// Classifier numbers reported alongside a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSummary {
    pub balance: DatasetBalance,
    pub cross_validation: Metrics,
    pub test: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub master_seed: u64,
    pub kappa: f64,
    pub open_loop: ModeSummary,
    pub closed_loop: ModeSummary,
    pub classifier: Option<ClassifierSummary>,
    /// Emitted files, relative to the output directory.
    pub artifacts: Vec<String>,
}

impl Experiment {
    /// Builds the demonstration, fits the DMP and derives the nominal plan.
    pub fn prepare(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let demo = demo::demo_gen(&config)?;
        let dmp = Dmp::fit(&demo, &config.dmp.dmp_config())?;
        Self::with_dmp(config, demo, dmp)
    }

    pub fn with_dmp(
        config: ExperimentConfig,
        demo: Trajectory,
        dmp: Dmp,
    ) -> Result<Self, HarnessError> {
        let plan = NominalPlan::from_dmp(&dmp, config.segments, config.dmp.rollout_dt)?;
        let schedule = GainSchedule::for_path(
            config.controller.kappa,
            config.controller.half_split,
            config.world.center_point(),
            &plan.points,
        )?;
        let arm = config.arm.arm()?;
        Ok(Self {
            config,
            demo,
            dmp,
            plan,
            schedule,
            arm,
        })
    }

    /// World of trial `id` in `stream`. Its `seed` drives the sensor noise,
    /// so both modes of a comparison pair see the same noise.
    pub fn world_for(&self, stream: Stream, id: u64) -> MediumWorld {
        let seed = derive_seed(self.config.master_seed, stream, id);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise_seed = derive_seed(seed, Stream::Noise, id);
        self.config
            .randomization
            .sample(&self.config.world, noise_seed, &mut rng)
    }

    pub fn run(
        &self,
        world: &MediumWorld,
        estimator: Option<&dyn PeelEstimator>,
        mode: Mode,
        trial_id: u64,
    ) -> Result<TrialRecord, HarnessError> {
        let setup = TrialSetup {
            plan: &self.plan,
            world,
            arm: &self.arm,
            ik: self.config.ik,
            criteria: self.config.controller.criteria,
        };
        Ok(run_trial(
            &setup,
            estimator,
            Some(&self.schedule),
            mode,
            trial_id,
            world.seed,
        )?)
    }

    /// Open-loop trials over `n` randomized worlds.
    pub fn collect(&self, n: usize) -> Result<Collection, HarnessError> {
        let worlds: Vec<MediumWorld> = (0..n as u64)
            .map(|i| self.world_for(Stream::Collect, i))
            .collect();
        let records = worlds
            .par_iter()
            .enumerate()
            .map(|(i, w)| self.run(w, None, Mode::OpenLoop, i as u64))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Collection { records, worlds })
    }

    /// Shuffles traces and splits off the held-out test set.
    pub fn split(&self, traces: &[TorqueTrace]) -> (Vec<TorqueTrace>, Vec<TorqueTrace>) {
        let mut shuffled = traces.to_vec();
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.config.master_seed, Stream::Split, 0));
        shuffled.shuffle(&mut rng);
        let n_test =
            (self.config.classifier.holdout_fraction * traces.len() as f64).round() as usize;
        let test = shuffled.split_off(traces.len() - n_test.min(traces.len()));
        (shuffled, test)
    }

    /// Cross-validates on the training traces, fits the final model on all
    /// of them and scores it on the held-out traces.
    pub fn train_classifier(&self, traces: &[TorqueTrace]) -> Result<Training, HarnessError> {
        let cfg = self.config.classifier.train_config();
        let (train_set, test_set) = self.split(traces);
        let cv = kfold_cv(&train_set, self.config.classifier.folds, &cfg)?;
        let samples: Vec<Sample> = train_set.iter().flat_map(|t| t.samples()).collect();
        let (model, report) = train(&samples, &cfg)?;
        if !report.converged {
            log::warn!(
                "classifier stopped after {} iterations without meeting tol {}",
                report.iterations,
                cfg.tol
            );
        }
        let test = evaluate(&model, &test_set);
        Ok(Training {
            model,
            report,
            cv,
            test,
            train_ids: train_set.iter().map(|t| t.trial_id).collect(),
            test_ids: test_set.iter().map(|t| t.trial_id).collect(),
        })
    }

    /// Paired trials: both modes run on world `i` of the comparison stream.
    pub fn compare(
        &self,
        estimator: &dyn PeelEstimator,
        n: usize,
    ) -> Result<Comparison, HarnessError> {
        let worlds: Vec<MediumWorld> = (0..n as u64)
            .map(|i| self.world_for(Stream::Compare, i))
            .collect();
        let pairs = worlds
            .par_iter()
            .enumerate()
            .map(|(i, w)| {
                let id = i as u64;
                let open = self.run(w, Some(estimator), Mode::OpenLoop, id)?;
                let closed = self.run(w, Some(estimator), Mode::ClosedLoop, id)?;
                Ok((open, closed))
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let (open, closed) = pairs.into_iter().unzip();
        Ok(Comparison {
            open,
            closed,
            worlds,
        })
    }

    /// Writes the collected trials and the classifier dataset.
    pub fn save_collection(&self, dir: &Path, c: &Collection) -> Result<Vec<String>, HarnessError> {
        let segments = self.config.segments;
        let joints = self.arm.joints();
        let entries: Vec<WorldEntry> = c
            .worlds
            .iter()
            .enumerate()
            .map(|(i, w)| records::world_entry(i as u64, w))
            .collect();
        let files = [
            (
                "collect_trials.csv",
                records::trials_csv(&c.records, joints)?,
            ),
            (
                "dataset.csv",
                records::trials_csv(c.kept(segments), joints)?,
            ),
            ("collect_worlds.json", records::worlds_json(&entries)?),
            ("collect_summary.json", to_json(&c.balance(segments))?),
        ];
        write_all(dir, files)
    }

    pub fn save_training(&self, dir: &Path, t: &Training) -> Result<Vec<String>, HarnessError> {
        let report = TrainingReport {
            iterations: t.report.iterations,
            converged: t.report.converged,
            final_cost: *t.report.cost_history.last().unwrap(),
            cross_validation: t.cv.metrics,
            test: t.test,
            train_ids: t.train_ids.clone(),
            test_ids: t.test_ids.clone(),
        };
        let files = [
            ("model.json", t.model.to_json()?),
            ("train_report.json", to_json(&report)?),
        ];
        write_all(dir, files)
    }

    /// Writes the paired trials, worlds and the summary; returns the summary.
    pub fn save_comparison(
        &self,
        dir: &Path,
        c: &Comparison,
        classifier: Option<ClassifierSummary>,
    ) -> Result<RunSummary, HarnessError> {
        let joints = self.arm.joints();
        let entries: Vec<WorldEntry> = c
            .worlds
            .iter()
            .enumerate()
            .map(|(i, w)| records::world_entry(i as u64, w))
            .collect();
        let mut artifacts = write_all(
            dir,
            [
                ("compare_open.csv", records::trials_csv(&c.open, joints)?),
                (
                    "compare_closed.csv",
                    records::trials_csv(&c.closed, joints)?,
                ),
                ("compare_worlds.json", records::worlds_json(&entries)?),
            ],
        )?;
        artifacts.push("summary.json".into());
        let summary = self.summarize(c, classifier, artifacts);
        write_file(&dir.join("summary.json"), &to_json(&summary)?)?;
        Ok(summary)
    }

    pub fn summarize(
        &self,
        c: &Comparison,
        classifier: Option<ClassifierSummary>,
        artifacts: Vec<String>,
    ) -> RunSummary {
        RunSummary {
            master_seed: self.config.master_seed,
            kappa: self.config.controller.kappa,
            open_loop: ModeSummary::from_records(&c.open),
            closed_loop: ModeSummary::from_records(&c.closed),
            classifier,
            artifacts,
        }
    }

    /// Full pipeline: collect, train, compare, and write everything to `dir`.
    pub fn run_all(&self, dir: &Path) -> Result<RunSummary, HarnessError> {
        let collection = self.collect(self.config.n_collect)?;
        self.save_collection(dir, &collection)?;
        let traces = collection.traces(self.config.segments);
        let training = self.train_classifier(&traces)?;
        self.save_training(dir, &training)?;
        let comparison = self.compare(&training.model, self.config.n_compare)?;
        let classifier = ClassifierSummary {
            balance: collection.balance(self.config.segments),
            cross_validation: training.cv.metrics,
            test: training.test,
        };
        self.save_comparison(dir, &comparison, Some(classifier))
    }
}

/// Trace-level scoring: every snapshot of every trace counts.
pub fn evaluate(model: &LogisticModel, traces: &[TorqueTrace]) -> Metrics {
    let confusion = traces.iter().fold(Confusion::default(), |acc, t| {
        let samples: Vec<Sample> = t.samples().collect();
        acc.merge(model.evaluate(&samples))
    });
    Metrics::from_confusion(confusion)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_cost: f64,
    pub cross_validation: Metrics,
    pub test: Metrics,
    pub train_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
}

/// Outcome of re-judging one stored trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayResult {
    pub trial_id: u64,
    pub mode: Mode,
    pub stored: Outcome,
    pub rejudged: Outcome,
}

/// Re-judges stored trials against the worlds they ran in.
pub fn replay(
    trials: &[StoredTrial],
    worlds: &[WorldEntry],
    config: &ExperimentConfig,
) -> Result<Vec<ReplayResult>, HarnessError> {
    trials
        .iter()
        .map(|t| {
            let entry = worlds
                .iter()
                .find(|w| w.trial_id == t.trial_id)
                .ok_or_else(|| HarnessError::Data(format!("no world for trial {}", t.trial_id)))?;
            if records::world_hash(&entry.world) != entry.world_hash {
                return Err(HarnessError::Data(format!(
                    "world of trial {} does not match its hash",
                    t.trial_id
                )));
            }
            let record = t.to_record(config.segments);
            Ok(ReplayResult {
                trial_id: t.trial_id,
                mode: t.mode,
                stored: t.outcome,
                rejudged: judge_outcome(&record, &entry.world, &config.controller.criteria),
            })
        })
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, HarnessError> {
    format::to_precise_json(value).map_err(|e| HarnessError::Data(e.to_string()))
}

fn write_all<const N: usize>(
    dir: &Path,
    files: [(&str, String); N],
) -> Result<Vec<String>, HarnessError> {
    files
        .into_iter()
        .map(|(name, contents)| {
            let path: PathBuf = dir.join(name);
            write_file(&path, &contents)?;
            Ok(name.to_string())
        })
        .collect()
}
