//! End-to-end tests of the fraudbench binary.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fraudbench")
}

fn fresh_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fraudbench-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(dir: &PathBuf) -> PathBuf {
    let path = dir.join("run.conf");
    fs::write(
        &path,
        "data.scenario.n_features = 4\n\
         data.scenario.n_samples = 240\n\
         data.scenario.separation = 3.0\n\
         engine.kind = forest\n\
         engine.cv_draws = 1\n\
         engine.cv_folds = 2\n\
         attacker.kind = mimicry\n\
         attacker.mimic.family = multivariate\n\
         run.t_max = 60\n\
         run.checkpoints = 30,60\n\
         run.seed = 5\n",
    )
    .unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

#[test]
fn gen_data_writes_a_deterministic_csv() {
    let dir = fresh_dir("gen");
    let config = small_config(&dir);
    let config = config.to_str().unwrap();
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        let o = run(&["gen-data", "--config", config, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read_to_string(out_a.join("data.csv")).unwrap();
    let b = fs::read_to_string(out_b.join("data.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 241);
    assert!(a.lines().next().unwrap().ends_with("class"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn attack_writes_reports_and_reruns_identically() {
    let dir = fresh_dir("attack");
    let config = small_config(&dir);
    let config = config.to_str().unwrap();
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        let o = run(&["attack", "--config", config, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("rate@30"), "{stdout}");
    }
    let a = fs::read_to_string(out_a.join("results.json")).unwrap();
    let b = fs::read_to_string(out_b.join("results.json")).unwrap();
    assert_eq!(a, b);
    assert!(out_a.join("summary.csv").exists());
    let curves: Vec<_> = fs::read_dir(&out_a)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("curve_")
        })
        .collect();
    assert_eq!(curves.len(), 1);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = fresh_dir("seed");
    let config = small_config(&dir);
    let config = config.to_str().unwrap();
    let out = dir.join("out");
    let o = run(&[
        "attack",
        "--config",
        config,
        "--seed",
        "77",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("seed 77"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = fresh_dir("badkey");
    let config = dir.join("bad.conf");
    fs::write(&config, "run.sed = 1\n").unwrap();
    let o = run(&[
        "attack",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.sed"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_input_data_exits_1() {
    let dir = fresh_dir("missing");
    let config = dir.join("run.conf");
    fs::write(
        &config,
        "data.csv.path = /nonexistent/frauds.csv\nrun.t_max = 10\nrun.checkpoints = 10\n",
    )
    .unwrap();
    let o = run(&[
        "attack",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_writes_aggregates_and_report_regenerates() {
    let dir = fresh_dir("sweep");
    let config = dir.join("sweep.conf");
    fs::write(
        &config,
        "data.scenario.n_features = 4\n\
         data.scenario.n_samples = 240\n\
         data.scenario.separation = 3.0\n\
         engine.kind = forest\n\
         engine.cv_draws = 1\n\
         engine.cv_folds = 2\n\
         run.t_max = 40\n\
         run.checkpoints = 40\n\
         sweep.seeds = 1,2\n\
         sweep.attackers = mimicry:uniform:all,mimicry:multivariate:all\n",
    )
    .unwrap();
    let out = dir.join("out");
    let o = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--parallelism",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("rate@40"), "{stdout}");

    let aggregates = fs::read_to_string(out.join("aggregates.csv")).unwrap();
    assert_eq!(aggregates.lines().count(), 3);
    assert_eq!(
        aggregates.lines().filter(|l| l.ends_with(",yes")).count(),
        1
    );

    let summary_before = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary_before.lines().count(), 5);
    fs::remove_file(out.join("summary.csv")).unwrap();
    let o = run(&["report", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let summary_after = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary_before, summary_after);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn train_engine_saves_a_loadable_model() {
    let dir = fresh_dir("train");
    let config = small_config(&dir);
    let out = dir.join("out");
    let o = run(&[
        "train-engine",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let engine = fraudbench::detectors::FraudEngine::load(&out.join("engine.json")).unwrap();
    let decision = engine.decide(&[0.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(decision == 0 || decision == 1);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("engine_metrics.json")).unwrap())
            .unwrap();
    assert!(metrics["cv_f1"].as_f64().unwrap() > 0.5);
    assert!(metrics["test_metrics"]["accuracy"].as_f64().unwrap() > 0.8);
    fs::remove_dir_all(&dir).unwrap();
}
