//! Trial CSV and world-file I/O.
//!
//! One CSV row per trial step:
//! `trial_id,mode,step,time_index,tau_1..tau_J,x_tip,y_tip,x_nominal,
//! y_nominal,pr_peel,d_signed,outcome`, floats with 9 significant digits.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::classifier::{Label, TorqueTrace};
use crate::control::{Mode, Outcome, TrialRecord};
use crate::format::{self, CSV_SIGNIFICANT_DIGITS};
use crate::world::{MediumWorld, Point};

fn num(v: f64) -> String {
    format::decimal(v, CSV_SIGNIFICANT_DIGITS)
}

pub fn header(joints: usize) -> Vec<String> {
    let mut h: Vec<String> = ["trial_id", "mode", "step", "time_index"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=joints).map(|j| format!("tau_{j}")));
    h.extend(
        [
            "x_tip",
            "y_tip",
            "x_nominal",
            "y_nominal",
            "pr_peel",
            "d_signed",
            "outcome",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

/// Renders records as a trial CSV. Every record must have `joints` torques
/// per step.
pub fn trials_csv<'a>(
    records: impl IntoIterator<Item = &'a TrialRecord>,
    joints: usize,
) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header(joints))?;
    for r in records {
        for t in 0..r.steps() {
            if r.torques[t].len() != joints {
                return Err(HarnessError::Data(format!(
                    "trial {} step {t} has {} torques, expected {joints}",
                    r.trial_id,
                    r.torques[t].len()
                )));
            }
            let mut row = vec![
                r.trial_id.to_string(),
                r.mode.as_str().to_string(),
                t.to_string(),
                t.to_string(),
            ];
            row.extend(r.torques[t].iter().map(|&v| num(v)));
            let (tip, nominal) = (r.corrected_path[t], r.nominal_path[t]);
            row.extend([
                num(tip.x),
                num(tip.y),
                num(nominal.x),
                num(nominal.y),
                num(r.pr_trace[t]),
                num(r.signed_distance[t]),
                r.outcome.as_str().to_string(),
            ]);
            w.write_record(&row)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Data(e.to_string()))
}

/// One trial read back from a trial CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrial {
    pub trial_id: u64,
    pub mode: Mode,
    pub outcome: Outcome,
    pub torques: Vec<Vec<f64>>,
    pub tip: Vec<Point>,
    pub nominal: Vec<Point>,
    pub pr_peel: Vec<f64>,
    pub d_signed: Vec<f64>,
}

impl StoredTrial {
    pub fn steps(&self) -> usize {
        self.tip.len()
    }

    /// Classifier label implied by the outcome; `None` for traces that have
    /// no place in the binary scheme.
    pub fn label(&self) -> Option<Label> {
        match self.outcome {
            Outcome::Success => Some(Label::Pulp),
            Outcome::StuckInPeel => Some(Label::Peel),
            Outcome::IncompleteExtraction => None,
        }
    }

    pub fn to_trace(&self) -> Option<TorqueTrace> {
        self.label().map(|label| TorqueTrace {
            trial_id: self.trial_id,
            torques: self.torques.clone(),
            label,
        })
    }

    /// Rebuilds the parts of a [`TrialRecord`] that a CSV keeps. Trials cut
    /// short by an IK failure show up with fewer than `segments` rows.
    pub fn to_record(&self, segments: usize) -> TrialRecord {
        TrialRecord {
            trial_id: self.trial_id,
            seed: 0,
            mode: self.mode,
            nominal_path: self.nominal.clone(),
            corrected_path: self.tip.clone(),
            torques: self.torques.clone(),
            pr_trace: self.pr_peel.clone(),
            signed_distance: self.d_signed.clone(),
            aborted_at: (self.steps() < segments).then_some(self.steps()),
            outcome: self.outcome,
        }
    }
}

fn parse<T: std::str::FromStr>(field: &str, what: &str, line: u64) -> Result<T, HarnessError> {
    field
        .parse()
        .map_err(|_| HarnessError::Data(format!("line {line}: bad {what} {field:?}")))
}

/// Parses a trial CSV, grouping consecutive rows of the same trial and mode.
pub fn read_trials_csv(text: &str) -> Result<Vec<StoredTrial>, HarnessError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let joints = headers.iter().filter(|h| h.starts_with("tau_")).count();
    let expected = header(joints);
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(HarnessError::Data(format!(
            "unexpected header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut trials: Vec<StoredTrial> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let trial_id: u64 = parse(&row[0], "trial id", line)?;
        let mode = Mode::parse(&row[1])
            .ok_or_else(|| HarnessError::Data(format!("line {line}: bad mode {:?}", &row[1])))?;
        let step: usize = parse(&row[2], "step", line)?;
        let torques = (0..joints)
            .map(|j| parse(&row[4 + j], "torque", line))
            .collect::<Result<Vec<f64>, _>>()?;
        let f = |k: usize, what: &str| parse::<f64>(&row[4 + joints + k], what, line);
        let tip = Point::new(f(0, "x_tip")?, f(1, "y_tip")?);
        let nominal = Point::new(f(2, "x_nominal")?, f(3, "y_nominal")?);
        let pr = f(4, "pr_peel")?;
        let d = f(5, "d_signed")?;
        let outcome = Outcome::parse(&row[4 + joints + 6]).ok_or_else(|| {
            HarnessError::Data(format!(
                "line {line}: bad outcome {:?}",
                &row[4 + joints + 6]
            ))
        })?;
        let continues = trials
            .last()
            .is_some_and(|t| t.trial_id == trial_id && t.mode == mode);
        if !continues {
            trials.push(StoredTrial {
                trial_id,
                mode,
                outcome,
                torques: Vec::new(),
                tip: Vec::new(),
                nominal: Vec::new(),
                pr_peel: Vec::new(),
                d_signed: Vec::new(),
            });
        }
        let trial = trials.last_mut().unwrap();
        if step != trial.steps() || outcome != trial.outcome {
            return Err(HarnessError::Data(format!(
                "line {line}: trial {trial_id} rows out of order or inconsistent"
            )));
        }
        trial.torques.push(torques);
        trial.tip.push(tip);
        trial.nominal.push(nominal);
        trial.pr_peel.push(pr);
        trial.d_signed.push(d);
    }
    Ok(trials)
}

/// Labelled traces of complete trials with a binary outcome.
pub fn dataset_traces(trials: &[StoredTrial], segments: usize) -> Vec<TorqueTrace> {
    trials
        .iter()
        .filter(|t| t.steps() == segments)
        .filter_map(StoredTrial::to_trace)
        .collect()
}

/// A trial's world, as written next to the trial CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldEntry {
    pub trial_id: u64,
    pub world_hash: String,
    pub world: MediumWorld,
}

/// SHA-256 of the world's canonical JSON, as hex.
pub fn world_hash(world: &MediumWorld) -> String {
    let text = format::to_precise_json(world).expect("worlds always serialize");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn world_entry(trial_id: u64, world: &MediumWorld) -> WorldEntry {
    WorldEntry {
        trial_id,
        world_hash: world_hash(world),
        world: world.clone(),
    }
}

pub fn worlds_json(entries: &[WorldEntry]) -> Result<String, HarnessError> {
    format::to_precise_json(&entries).map_err(|e| HarnessError::Data(e.to_string()))
}

pub fn read_worlds_json(text: &str) -> Result<Vec<WorldEntry>, HarnessError> {
    serde_json::from_str(text).map_err(|e| HarnessError::Data(e.to_string()))
}
