mod common;

use std::fs;
use std::path::Path;

use trialgen::simulation::{double_robustness_config, run_mc, McEstimator, McOptions, SimConfig};

fn inputs(dir: &Path) -> [String; 3] {
    let (trial, target) = common::study(200, 600, 8);
    let (rct, rwd, schema) = common::write_inputs(dir, &trial, &target);
    [rct, rwd, schema].map(|p| p.to_string_lossy().into_owned())
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let [rct, rwd, schema] = inputs(dir.path());
    let o = common::trialgen(&["estimate", "--rct", &rct, "--rwd", &rwd, "--schema", &schema]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
}

#[test]
fn unknown_outcome_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let [rct, rwd, schema] = inputs(dir.path());
    let out = dir.path().join("out");
    let o = common::trialgen(&[
        "estimate", "--rct", &rct, "--rwd", &rwd, "--schema", &schema, "--outcomes", "week12", "--seed", "1",
        "--outdir", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn separated_cohorts_are_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let schema = dir.path().join("schema.txt");
    let rct = dir.path().join("rct.csv");
    let rwd = dir.path().join("rwd.csv");
    fs::write(&schema, "x1:continuous\nx2:continuous\n").unwrap();
    let mut trial = String::from("x1,x2,arm,y\n");
    let mut target = String::from("x1,x2\n");
    for i in 0..40 {
        let v = i as f64 / 10.0;
        trial.push_str(&format!("{},{},{},{}\n", v, (i * 7 % 11) as f64, i % 2, v * 0.5));
        target.push_str(&format!("{},{}\n", -1.0 - v, (i * 5 % 13) as f64));
    }
    fs::write(&rct, trial).unwrap();
    fs::write(&rwd, target).unwrap();
    let out = dir.path().join("out");
    let o = common::trialgen(&[
        "estimate",
        "--rct",
        rct.to_str().unwrap(),
        "--rwd",
        rwd.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--seed",
        "1",
        "--B",
        "100",
        "--outdir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn run_all_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let [rct, rwd, schema] = inputs(dir.path());
    let out = dir.path().join("out");
    let o = common::trialgen(&[
        "run-all", "--rct", &rct, "--rwd", &rwd, "--schema", &schema, "--B", "100", "--grid", "30x30", "--seed", "4",
        "--outdir", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "report.json",
        "report.txt",
        "forest.svg",
        "forest.csv",
        "contour_week4_lower.svg",
        "contour_week4_upper.csv",
        "contour_week8_lower_points.csv",
        "contour_week8_upper.svg",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["outcomes"].as_array().unwrap().len(), 2);
    assert!(report["outcomes"][0]["conclusion"]["conclusion"].is_string());
}

#[test]
fn conclude_prints_the_table_cell() {
    let o = common::trialgen(&[
        "conclude",
        "--lower",
        "-1.2",
        "--upper",
        "0.4",
        "--lower-robust",
        "--upper-robust",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("no difference"));
}

#[test]
fn simulate_reports_three_estimators() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimConfig {
        n_trial: 150,
        m_target: 450,
        truth_draws: 20_000,
        ..double_robustness_config()
    };
    let path = dir.path().join("sim.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    let out = dir.path().join("out");
    let o = common::trialgen(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--reps",
        "100",
        "--seed",
        "9",
        "--outdir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("mc_result.json")).unwrap()).unwrap();
    let labels: Vec<&str> = result["estimators"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["om", "ipsw", "aipsw"]);
}

#[test]
fn simulate_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.toml");
    fs::write(&path, double_robustness_config().to_toml()).unwrap();
    let o = common::trialgen(&["simulate", "--config", path.to_str().unwrap(), "--outdir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn doubling_reps_shrinks_mcse_by_root_two() {
    let cfg = SimConfig {
        n_trial: 150,
        m_target: 450,
        truth_draws: 20_000,
        ..double_robustness_config()
    };
    let est = McEstimator::standard_set(&cfg);
    let run = |reps| {
        run_mc(
            &cfg,
            &est,
            McOptions {
                reps,
                seed: 12,
                bootstrap: None,
            },
        )
        .unwrap()
    };
    let (small, large) = (run(400), run(800));
    for (a, b) in small.estimators.iter().zip(&large.estimators) {
        let ratio = b.bias_mcse / a.bias_mcse;
        let expected = 0.5f64.sqrt();
        assert!((ratio / expected - 1.0).abs() < 0.2, "{}: ratio {ratio}", a.label);
    }
}
