//! Harness behaviour on small end-to-end runs.

use std::sync::OnceLock;

use boundary_cut::classifier::{metrics_from_confusion, Label};
use boundary_cut::control::{InPeelOracle, Mode, Outcome};
use boundary_cut::harness::experiment::{replay, Collection};
use boundary_cut::harness::records::{
    dataset_traces, read_trials_csv, read_worlds_json, trials_csv, world_entry, world_hash,
};
use boundary_cut::harness::stats::torque_stats;
use boundary_cut::harness::{Experiment, ExperimentConfig, Stream};

fn experiment() -> &'static Experiment {
    static E: OnceLock<Experiment> = OnceLock::new();
    E.get_or_init(|| Experiment::prepare(ExperimentConfig::default()).unwrap())
}

fn collection() -> &'static Collection {
    static C: OnceLock<Collection> = OnceLock::new();
    C.get_or_init(|| {
        let e = experiment();
        e.collect(e.config.n_collect).unwrap()
    })
}

#[test]
fn default_collection_is_balanced() {
    let b = collection().balance(24);
    assert_eq!(b.kept() + b.excluded, 111);
    let peel = b.peel as f64 / b.kept() as f64;
    assert!((0.4..=0.6).contains(&peel), "{b:?}");
}

#[test]
fn dataset_rows_match_kept_traces() {
    let e = experiment();
    let c = collection();
    let text = trials_csv(c.kept(24), 3).unwrap();
    let kept = c.kept(24).count();
    assert_eq!(text.lines().count(), 1 + kept * 24);
    let trials = read_trials_csv(&text).unwrap();
    assert!(trials.iter().all(|t| t.steps() == e.config.segments));
    assert_eq!(dataset_traces(&trials, 24).len(), kept);
}

#[test]
fn collection_is_deterministic() {
    let e = experiment();
    let again = e.collect(20).unwrap();
    let first: Vec<_> = collection().records[..20].to_vec();
    assert_eq!(
        trials_csv(&first, 3).unwrap(),
        trials_csv(&again.records, 3).unwrap()
    );
}

#[test]
fn training_reports_consistent_metrics() {
    let e = experiment();
    let traces = collection().traces(24);
    let t = e.train_classifier(&traces).unwrap();
    assert_eq!(t.train_ids.len() + t.test_ids.len(), traces.len());
    assert_eq!(
        t.test_ids.len(),
        (traces.len() as f64 * 21.0 / 111.0).round() as usize
    );

    let mut folded: Vec<u64> = t.cv.folds.iter().flatten().copied().collect();
    folded.sort_unstable();
    let mut train_ids = t.train_ids.clone();
    train_ids.sort_unstable();
    assert_eq!(folded, train_ids);

    for m in [t.cv.metrics, t.test] {
        let c = m.confusion;
        assert_eq!(m, metrics_from_confusion(c.tp, c.fn_, c.fp, c.tn));
    }
    assert_eq!(t.test.confusion.total(), t.test_ids.len() as u64 * 24);
}

#[test]
fn easy_regime_test_misclassification_below_five_percent() {
    let mut config = ExperimentConfig::default();
    config.world.noise_sigma = 0.0;
    config.randomization.noise_sigma = [0.0, 0.0];
    config.world.mu_peel = 60.0;
    config.randomization.mu_peel = [50.0, 70.0];
    let e = Experiment::prepare(config).unwrap();
    let c = e.collect(111).unwrap();
    let t = e.train_classifier(&c.traces(24)).unwrap();
    // floor set by the labels themselves: an exact in-peel detector scored
    // against the outcome labels of the kept traces
    let (mut wrong, mut total) = (0, 0);
    for r in c.kept(24) {
        let peel = r.outcome == Outcome::StuckInPeel;
        for &d in &r.signed_distance {
            wrong += usize::from((d >= 0.0) != peel);
            total += 1;
        }
    }
    assert!(
        t.test.misclassification_rate < 0.05,
        "test misclassification {:.3}; an exact in-peel detector scores {:.3} on the same labels",
        t.test.misclassification_rate,
        wrong as f64 / total as f64
    );
}

/// Welford's running mean, independent of the two-pass implementation.
fn streaming_mean(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values.fold((0, 0.0), |(n, mean), v| {
        let n = n + 1;
        (n, mean + (v - mean) / n as f64)
    })
}

#[test]
fn torque_stats_match_streaming_oracle() {
    let traces = collection().traces(24);
    let stats = torque_stats(&traces, 3, 24).unwrap();
    assert_eq!(stats.len(), 3 * 24 * 2);
    for s in &stats {
        let (n, mean) = streaming_mean(
            traces
                .iter()
                .filter(|t| t.label == s.label)
                .map(|t| t.torques[s.time_index][s.joint]),
        );
        assert_eq!(n, s.count);
        assert!((mean - s.mean).abs() < 1e-12, "{s:?} vs {mean}");
    }
    assert!(stats.iter().any(|s| s.label == Label::Peel && s.count > 0));
}

#[test]
fn replay_reproduces_fifty_records() {
    let e = experiment();
    let c = collection();
    let text = trials_csv(&c.records[..50], 3).unwrap();
    let entries: Vec<_> = c.worlds[..50]
        .iter()
        .enumerate()
        .map(|(i, w)| world_entry(i as u64, w))
        .collect();
    let trials = read_trials_csv(&text).unwrap();
    let results = replay(&trials, &entries, &e.config).unwrap();
    assert_eq!(results.len(), 50);
    assert!(
        results.iter().all(|r| r.stored == r.rejudged),
        "{results:?}"
    );
}

#[test]
fn replay_flags_tampered_path() {
    let e = experiment();
    let c = collection();
    let i = c
        .records
        .iter()
        .position(|r| r.outcome == Outcome::Success)
        .expect("some trial succeeds");
    let entries = vec![world_entry(i as u64, &c.worlds[i])];
    let mut trials = read_trials_csv(&trials_csv(&c.records[i..=i], 3).unwrap()).unwrap();
    assert_eq!(
        replay(&trials, &entries, &e.config).unwrap()[0].rejudged,
        Outcome::Success
    );

    let world = &c.worlds[i];
    let center = world.center_point();
    let p = trials[0].tip[10];
    let phi = (p.y - center.y).atan2(p.x - center.x);
    let outward = (p - center).normalize();
    trials[0].tip[10] = world.boundary_point(phi) + 0.006 * outward;
    let r = replay(&trials, &entries, &e.config).unwrap();
    assert_eq!(r[0].stored, Outcome::Success);
    assert_eq!(r[0].rejudged, Outcome::StuckInPeel);
}

#[test]
fn replay_rejects_altered_world() {
    let e = experiment();
    let c = collection();
    let mut entries = vec![world_entry(0, &c.worlds[0])];
    entries[0].world.mu_peel += 1.0;
    let trials = read_trials_csv(&trials_csv(&c.records[..1], 3).unwrap()).unwrap();
    assert!(replay(&trials, &entries, &e.config).is_err());
}

#[test]
fn paired_trials_share_world_and_accounting_holds() {
    let e = experiment();
    let c = e.compare(&InPeelOracle, 12).unwrap();
    assert_eq!(c.open.len(), 12);
    assert_eq!(c.closed.len(), 12);
    for (i, (open, closed)) in c.open.iter().zip(&c.closed).enumerate() {
        assert_eq!((open.mode, closed.mode), (Mode::OpenLoop, Mode::ClosedLoop));
        assert_eq!(open.trial_id, closed.trial_id);
        assert_eq!(
            world_hash(&c.worlds[i]),
            world_hash(&e.world_for(Stream::Compare, i as u64))
        );
        assert_eq!(open.seed, closed.seed);
    }
    let summary = e.summarize(&c, None, Vec::new());
    for m in [summary.open_loop, summary.closed_loop] {
        assert_eq!(m.successful + m.failed, 12);
        assert_eq!(m.stuck + m.incomplete, m.failed);
    }
}

#[test]
fn worlds_file_round_trips() {
    let c = collection();
    let entries: Vec<_> = c.worlds[..5]
        .iter()
        .enumerate()
        .map(|(i, w)| world_entry(i as u64, w))
        .collect();
    let text = boundary_cut::harness::records::worlds_json(&entries).unwrap();
    assert_eq!(read_worlds_json(&text).unwrap(), entries);
}
