use std::fs;

use entropic_mfg::harness::{
    reproduce, write_failure_marker, write_report, ExperimentConfig, FAILURE_MARKER, SUMMARY_FILE,
    TABLE_FILES,
};
use entropic_mfg::learner::{Estimator, LearnerConfig};

fn small() -> ExperimentConfig {
    ExperimentConfig {
        learner: LearnerConfig {
            outer_iterations: 2,
            inner_iterations: 3,
            n_trajectories: 4,
            estimator: Estimator::TwoPoint,
            ..LearnerConfig::default()
        },
        lambda_se_values: vec![1.0, 3.0],
        n_eval_paths: 100,
        seed: 11,
        ..ExperimentConfig::default()
    }
}

fn rows(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn report_writes_every_table_and_a_manifest() {
    let cfg = small();
    let report = reproduce(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_report(&report, dir.path()).unwrap();
    assert_eq!(written.len(), TABLE_FILES.len() + 1);
    assert!(!dir.path().join(FAILURE_MARKER).exists());

    let learning = fs::read_to_string(dir.path().join("learning_curve.csv")).unwrap();
    let per_lambda = cfg.learner.outer_iterations * (cfg.learner.inner_iterations + 1);
    let learning = rows(&learning);
    assert_eq!(learning.len(), per_lambda * cfg.lambda_se_values.len());
    for r in &learning {
        let e: f64 = r[4].parse().unwrap();
        assert!(e.is_finite() && e >= 0.0);
    }
    let outer = rows(&fs::read_to_string(dir.path().join("outer_curve.csv")).unwrap());
    assert_eq!(
        outer.len(),
        cfg.learner.outer_iterations * cfg.lambda_se_values.len()
    );
    let schedule = rows(&fs::read_to_string(dir.path().join("variance_schedule.csv")).unwrap());
    assert_eq!(schedule.len(), 5 * cfg.lambda_se_values.len());
    let mf = rows(&fs::read_to_string(dir.path().join("mean_field.csv")).unwrap());
    assert_eq!(
        mf.len(),
        (cfg.learner.outer_iterations + 1) * 6 * cfg.lambda_se_values.len()
    );

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["seed"], 11);
    assert_eq!(summary["runs"].as_array().unwrap().len(), 2);
    let echoed: ExperimentConfig = serde_json::from_value(summary["config"].clone()).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn learned_values_survive_the_csv_round_trip() {
    let report = reproduce(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_report(&report, dir.path()).unwrap();
    let schedule = rows(&fs::read_to_string(dir.path().join("variance_schedule.csv")).unwrap());
    for (r, want) in schedule.iter().zip(&report.runs[0].learned.sigma2) {
        assert_eq!(r[2].parse::<f64>().unwrap().to_bits(), want.to_bits());
    }
}

#[test]
fn blocked_table_leaves_a_marker_and_no_manifest() {
    let report = reproduce(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(SUMMARY_FILE), "stale").unwrap();
    fs::create_dir(dir.path().join("mean_field.csv")).unwrap();
    assert!(write_report(&report, dir.path()).is_err());
    assert!(dir.path().join(FAILURE_MARKER).exists());
    assert!(!dir.path().join(SUMMARY_FILE).exists());
}

#[test]
fn successful_rerun_clears_an_old_marker() {
    let report = reproduce(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_failure_marker(dir.path(), "earlier failure").unwrap();
    write_report(&report, dir.path()).unwrap();
    assert!(!dir.path().join(FAILURE_MARKER).exists());
    assert!(dir.path().join(SUMMARY_FILE).exists());
}

#[test]
fn config_file_round_trips() {
    let cfg = small()
        .with_overrides(&["learner.radius=0.02", "game.Q=2.5"])
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, cfg.to_json()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
    assert!(ExperimentConfig::load(&dir.path().join("missing.json")).is_err());
}
