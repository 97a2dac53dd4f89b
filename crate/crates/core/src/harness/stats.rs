//! Per-joint torque summaries of a dataset.

use crate::classifier::{Label, TorqueTrace};
use crate::format::{self, CSV_SIGNIFICANT_DIGITS};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueStat {
    pub joint: usize,
    pub time_index: usize,
    pub label: Label,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

fn label_name(label: Label) -> &'static str {
    match label {
        Label::Pulp => "pulp",
        Label::Peel => "peel",
    }
}

/// Mean and standard deviation of every joint at every time index, per
/// label. Rows are ordered by joint, then time index, then label (pulp
/// first). Empty groups report zero.
pub fn torque_stats(
    traces: &[TorqueTrace],
    joints: usize,
    segments: usize,
) -> Result<Vec<TorqueStat>, HarnessError> {
    for t in traces {
        if t.torques.len() != segments || t.torques.iter().any(|row| row.len() != joints) {
            return Err(HarnessError::Data(format!(
                "trace {} is not {segments} x {joints}",
                t.trial_id
            )));
        }
    }
    let mut out = Vec::with_capacity(joints * segments * 2);
    for joint in 0..joints {
        for time_index in 0..segments {
            for label in [Label::Pulp, Label::Peel] {
                let values: Vec<f64> = traces
                    .iter()
                    .filter(|t| t.label == label)
                    .map(|t| t.torques[time_index][joint])
                    .collect();
                let count = values.len();
                let (mean, std) = if count == 0 {
                    (0.0, 0.0)
                } else {
                    let n = count as f64;
                    let mean = values.iter().sum::<f64>() / n;
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    (mean, var.sqrt())
                };
                out.push(TorqueStat {
                    joint,
                    time_index,
                    label,
                    count,
                    mean,
                    std,
                });
            }
        }
    }
    Ok(out)
}

/// `joint,time_index,label,count,mean,std` with 1-based joints.
pub fn stats_csv(stats: &[TorqueStat]) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["joint", "time_index", "label", "count", "mean", "std"])?;
    for s in stats {
        w.write_record([
            (s.joint + 1).to_string(),
            s.time_index.to_string(),
            label_name(s.label).to_string(),
            s.count.to_string(),
            format::decimal(s.mean, CSV_SIGNIFICANT_DIGITS),
            format::decimal(s.std, CSV_SIGNIFICANT_DIGITS),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(id: u64, label: Label, value: f64) -> TorqueTrace {
        TorqueTrace {
            trial_id: id,
            torques: vec![vec![value, -value, 2.0 * value]; 4],
            label,
        }
    }

    #[test]
    fn constant_traces_have_zero_spread() {
        let traces = vec![
            trace(0, Label::Pulp, 1.5),
            trace(1, Label::Pulp, 1.5),
            trace(2, Label::Peel, 3.0),
        ];
        let stats = torque_stats(&traces, 3, 4).unwrap();
        assert_eq!(stats.len(), 3 * 4 * 2);
        for s in &stats {
            assert_eq!(s.std, 0.0);
        }
        assert_eq!(stats[0].mean, 1.5);
        assert_eq!(stats[1].mean, 3.0);
    }

    #[test]
    fn csv_shape() {
        let stats = torque_stats(&[trace(0, Label::Pulp, 1.0)], 3, 4).unwrap();
        let text = stats_csv(&stats).unwrap();
        assert_eq!(text.lines().count(), 1 + 24);
        assert!(text.starts_with("joint,time_index,label,count,mean,std\n1,0,pulp,1,1.00000000,0.00000000\n1,0,peel,0,0.00000000,0.00000000\n"));
    }

    #[test]
    fn ragged_trace_rejected() {
        let mut t = trace(0, Label::Pulp, 1.0);
        t.torques.pop();
        assert!(torque_stats(&[t], 3, 4).is_err());
    }
}
