//! Binary pulp/peel classifier over time-indexed torque snapshots.
//!
//! Regularized logistic regression with an unpenalized bias, trained by
//! full-batch gradient descent on standardized features. Peel is the
//! positive class.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format;

/// Probabilities are kept this far away from 0 and 1.
const PROB_FLOOR: f64 = 1e-15;
/// Log arguments in the cost are clamped to `[LOG_CLAMP, 1 - LOG_CLAMP]`.
const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed model document: {0}")]
    Document(String),
}

type Result<T> = std::result::Result<T, ClassifierError>;

fn invalid(msg: impl Into<String>) -> ClassifierError {
    ClassifierError::InvalidArgument(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Pulp,
    Peel,
}

impl Label {
    pub fn as_target(self) -> f64 {
        match self {
            Label::Pulp => 0.0,
            Label::Peel => 1.0,
        }
    }
}

/// One torque snapshot; the time index is the last feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Label,
    pub trial_id: u64,
}

/// All snapshots of one trial, labelled by the trial's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueTrace {
    pub trial_id: u64,
    /// `torques[t]` holds the J joint torques sensed at time index `t`.
    pub torques: Vec<Vec<f64>>,
    pub label: Label,
}

impl TorqueTrace {
    pub fn samples(&self) -> impl Iterator<Item = Sample> + '_ {
        self.torques.iter().enumerate().map(|(t, tau)| Sample {
            features: feature_vector(tau, t),
            label: self.label,
            trial_id: self.trial_id,
        })
    }
}

/// Classifier input for torques sensed at time index `t`.
pub fn feature_vector(torques: &[f64], t: usize) -> Vec<f64> {
    let mut f = Vec::with_capacity(torques.len() + 1);
    f.extend_from_slice(torques);
    f.push(t as f64);
    f
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dims: usize) -> Self {
        Self {
            means: vec![0.0; dims],
            stds: vec![1.0; dims],
        }
    }

    /// Population statistics of `rows`; constant features get unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let Some(first) = rows.first() else {
            return Err(invalid("cannot standardize an empty dataset"));
        };
        let dims = first.len();
        if rows.iter().any(|r| r.len() != dims) {
            return Err(invalid("feature rows differ in length"));
        }
        let n = rows.len() as f64;
        let means: Vec<f64> = (0..dims)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let stds = (0..dims)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { means, stds })
    }

    pub fn apply(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// Negative log-likelihood of a logistic model plus an L2 penalty on the
/// feature weights. Parameters are laid out as `[w_1 .. w_D, bias]`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
    lambda: f64,
    dims: usize,
}

impl LogisticObjective {
    pub fn new(rows: Vec<Vec<f64>>, labels: &[Label], lambda: f64, dims: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(invalid("row and label counts differ"));
        }
        if rows.iter().any(|r| r.len() != dims) {
            return Err(invalid(format!("every row must have {dims} features")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid(format!(
                "lambda must be non-negative, got {lambda}"
            )));
        }
        Ok(Self {
            rows,
            targets: labels.iter().map(|l| l.as_target()).collect(),
            lambda,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    fn logit(params: &[f64], row: &[f64]) -> f64 {
        let (w, bias) = params.split_at(row.len());
        w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + bias[0]
    }

    pub fn cost(&self, params: &[f64]) -> f64 {
        assert_eq!(params.len(), self.dims + 1, "parameter length");
        let nll: f64 = self
            .rows
            .iter()
            .zip(&self.targets)
            .map(|(row, &y)| {
                let p = sigmoid(Self::logit(params, row)).clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
                -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
            })
            .sum();
        let penalty: f64 = params[..self.dims].iter().map(|w| w * w).sum();
        nll + 0.5 * self.lambda * penalty
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        assert_eq!(params.len(), self.dims + 1, "parameter length");
        let mut grad = vec![0.0; self.dims + 1];
        for (row, &y) in self.rows.iter().zip(&self.targets) {
            let r = sigmoid(Self::logit(params, row)) - y;
            for (g, x) in grad.iter_mut().zip(row) {
                *g += r * x;
            }
            grad[self.dims] += r;
        }
        for (g, w) in grad.iter_mut().zip(&params[..self.dims]) {
            *g += self.lambda * w;
        }
        grad
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    /// Step size applied to the per-sample mean gradient.
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Convergence threshold on the per-sample mean gradient norm.
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            learning_rate: 0.1,
            max_iters: 5000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

/// Trained model: weights act on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardizer: Standardizer,
}

impl LogisticModel {
    /// All-zero model, which answers 0.5 everywhere.
    pub fn uninformative(dims: usize) -> Self {
        Self {
            lambda: 0.0,
            weights: vec![0.0; dims],
            bias: 0.0,
            standardizer: Standardizer::identity(dims),
        }
    }

    pub fn dims(&self) -> usize {
        self.weights.len()
    }

    /// Number of joints the model expects (features minus the time index).
    pub fn joints(&self) -> usize {
        self.dims().saturating_sub(1)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Pr(peel) for raw (unstandardized) features.
    pub fn predict_proba(&self, features: &[f64]) -> f64 {
        let x = self.standardizer.apply(features);
        let z = self.weights.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + self.bias;
        sigmoid(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    }

    pub fn predict(&self, features: &[f64]) -> Label {
        if self.predict_proba(features) >= 0.5 {
            Label::Peel
        } else {
            Label::Pulp
        }
    }

    fn objective(&self, samples: &[Sample]) -> Result<LogisticObjective> {
        let rows = samples
            .iter()
            .map(|s| self.standardizer.apply(&s.features))
            .collect();
        let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
        LogisticObjective::new(rows, &labels, self.lambda, self.dims())
    }

    /// Regularized negative log-likelihood of `samples` under this model.
    pub fn cost(&self, samples: &[Sample]) -> Result<f64> {
        Ok(self.objective(samples)?.cost(&self.params()))
    }

    /// Gradient of [`LogisticModel::cost`] with respect to `[weights, bias]`.
    pub fn gradient(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        Ok(self.objective(samples)?.gradient(&self.params()))
    }

    /// Confusion counts of thresholded predictions on `samples`.
    pub fn evaluate(&self, samples: &[Sample]) -> Confusion {
        let mut c = Confusion::default();
        for s in samples {
            c.record(s.label, self.predict(&s.features));
        }
        c
    }

    pub fn to_json(&self) -> Result<String> {
        format::to_precise_json(&ModelDocument::from(self))
            .map_err(|e| ClassifierError::Document(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| ClassifierError::Document(e.to_string()))?;
        let dims = doc.j + 1;
        if doc.weights.len() != dims || doc.means.len() != dims || doc.stds.len() != dims {
            return Err(ClassifierError::Document(format!(
                "J = {} needs {dims} weights, means and stds",
                doc.j
            )));
        }
        if doc.stds.iter().any(|s| !(*s > 0.0)) {
            return Err(ClassifierError::Document("stds must be positive".into()));
        }
        Ok(Self {
            lambda: doc.lambda,
            weights: doc.weights,
            bias: doc.bias,
            standardizer: Standardizer {
                means: doc.means,
                stds: doc.stds,
            },
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    #[serde(rename = "J")]
    j: usize,
    lambda: f64,
    weights: Vec<f64>,
    bias: f64,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl From<&LogisticModel> for ModelDocument {
    fn from(m: &LogisticModel) -> Self {
        Self {
            j: m.joints(),
            lambda: m.lambda,
            weights: m.weights.clone(),
            bias: m.bias,
            means: m.standardizer.means.clone(),
            stds: m.standardizer.stds.clone(),
        }
    }
}

/// Trains a model on `samples` by gradient descent with step halving.
pub fn train(samples: &[Sample], config: &TrainConfig) -> Result<(LogisticModel, TrainReport)> {
    let Some(first) = samples.first() else {
        return Err(invalid("training set is empty"));
    };
    let has = |l: Label| samples.iter().any(|s| s.label == l);
    if !(has(Label::Pulp) && has(Label::Peel)) {
        return Err(invalid(
            "training set must contain both pulp and peel samples",
        ));
    }
    if !(config.learning_rate > 0.0) {
        return Err(invalid("learning rate must be positive"));
    }
    let dims = first.features.len();
    let standardizer = Standardizer::fit(samples.iter().map(|s| s.features.as_slice()))?;
    let rows = samples
        .iter()
        .map(|s| standardizer.apply(&s.features))
        .collect();
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let objective = LogisticObjective::new(rows, &labels, config.lambda, dims)?;
    let n = objective.len() as f64;

    let mut params = vec![0.0; dims + 1];
    let mut cost = objective.cost(&params);
    let mut grad = objective.gradient(&params);
    let mut lr = config.learning_rate;
    let mut history = vec![cost];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() / n;
        if grad_norm < config.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let candidate: Vec<f64> = params
            .iter()
            .zip(&grad)
            .map(|(p, g)| p - lr * g / n)
            .collect();
        let candidate_cost = objective.cost(&candidate);
        if candidate_cost <= cost {
            params = candidate;
            cost = candidate_cost;
            grad = objective.gradient(&params);
            history.push(cost);
        } else {
            lr *= 0.5;
            if lr < 1e-30 {
                break;
            }
        }
    }
    let bias = params.pop().unwrap();
    let model = LogisticModel {
        lambda: config.lambda,
        weights: params,
        bias,
        standardizer,
    };
    Ok((
        model,
        TrainReport {
            iterations,
            converged,
            cost_history: history,
        },
    ))
}

/// Confusion counts with Peel as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        Self { tp, fn_, fp, tn }
    }

    pub fn record(&mut self, actual: Label, predicted: Label) {
        match (actual, predicted) {
            (Label::Peel, Label::Peel) => self.tp += 1,
            (Label::Peel, Label::Pulp) => self.fn_ += 1,
            (Label::Pulp, Label::Peel) => self.fp += 1,
            (Label::Pulp, Label::Pulp) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fn_: self.fn_ + other.fn_,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
        }
    }
}

/// Summary rates. Rates with an empty denominator are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Confusion,
    pub sensitivity: f64,
    pub specificity: f64,
    pub misclassification_rate: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `num / den` in hundredths, rounded half-up in exact integer arithmetic.
fn hundredths(num: u64, den: u64) -> u64 {
    if den == 0 {
        0
    } else {
        (200 * num + den) / (2 * den)
    }
}

impl Metrics {
    pub fn from_confusion(confusion: Confusion) -> Self {
        let c = confusion;
        Self {
            confusion: c,
            sensitivity: ratio(c.tp, c.tp + c.fn_),
            specificity: ratio(c.tn, c.tn + c.fp),
            misclassification_rate: ratio(c.fn_ + c.fp, c.total()),
        }
    }

    /// Sensitivity rounded to two decimals.
    pub fn sensitivity_2dp(&self) -> f64 {
        hundredths(self.confusion.tp, self.confusion.tp + self.confusion.fn_) as f64 / 100.0
    }

    /// Specificity rounded to two decimals.
    pub fn specificity_2dp(&self) -> f64 {
        hundredths(self.confusion.tn, self.confusion.tn + self.confusion.fp) as f64 / 100.0
    }

    /// Misclassification rate as a whole percentage.
    pub fn misclassification_percent(&self) -> u64 {
        let c = self.confusion;
        hundredths(c.fn_ + c.fp, c.total())
    }
}

/// Metrics of the confusion counts `(TP, FN, FP, TN)`.
pub fn metrics_from_confusion(tp: u64, fn_: u64, fp: u64, tn: u64) -> Metrics {
    Metrics::from_confusion(Confusion::new(tp, fn_, fp, tn))
}

/// Pooled result of k-fold cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub metrics: Metrics,
    /// Trial ids held out in each fold.
    pub folds: Vec<Vec<u64>>,
}

/// Splits `n` items into `k` contiguous folds whose sizes differ by at
/// most one. Returns index ranges.
pub fn fold_ranges(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// k-fold cross-validation at trace granularity: every trace lands in
/// exactly one validation fold and never contributes to its own training
/// split. Traces are taken in the given order.
pub fn kfold_cv(traces: &[TorqueTrace], k: usize, config: &TrainConfig) -> Result<CrossValidation> {
    if k < 2 {
        return Err(invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > traces.len() {
        return Err(invalid(format!(
            "{k} folds requested for only {} traces",
            traces.len()
        )));
    }
    let ranges = fold_ranges(traces.len(), k);
    let results: Vec<Result<Confusion>> = ranges
        .par_iter()
        .map(|range| {
            let train_samples: Vec<Sample> = traces
                .iter()
                .enumerate()
                .filter(|(i, _)| !range.contains(i))
                .flat_map(|(_, t)| t.samples())
                .collect();
            let (model, _) = train(&train_samples, config)?;
            let held_out: Vec<Sample> = traces[range.clone()]
                .iter()
                .flat_map(|t| t.samples())
                .collect();
            Ok(model.evaluate(&held_out))
        })
        .collect();
    let mut pooled = Confusion::default();
    for r in results {
        pooled = pooled.merge(r?);
    }
    Ok(CrossValidation {
        metrics: Metrics::from_confusion(pooled),
        folds: ranges
            .into_iter()
            .map(|r| traces[r].iter().map(|t| t.trial_id).collect())
            .collect(),
    })
}
