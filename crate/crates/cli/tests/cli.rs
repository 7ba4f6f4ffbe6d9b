//! Runs the `cdwce` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cdwce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdwce"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const QUICK: &[&str] = &["--samples", "300", "--input-dim", "3", "--epochs", "3", "--trials", "2"];

fn with<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(tail).copied().collect()
}

#[test]
fn bench_writes_reports_and_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = cdwce(&with(&["bench", "--losses", "ce,cdw_ce:5", "--out", out], QUICK));
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("| QWK |") && stdout.contains("CDW-CE (α=5)"));
    for file in ["aggregate.json", "trials.csv", "summary.md", "confusion_cdw_ce_a5.csv", "roc_ce_class0.csv"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"n_trials": 5, "master_seed": 3, "losses": [{"kind": "ce"}],
            "train": {"epochs": 2},
            "dataset": {"source": "synthetic", "params": {"n_samples": 200, "input_dim": 2}}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = cdwce(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "1",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let agg: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["config"]["n_trials"], 1);
    assert_eq!(agg["config"]["master_seed"], 9);
    assert_eq!(agg["config"]["train"]["epochs"], 2);
    assert_eq!(agg["trials"].as_array().unwrap().len(), 1);
}

#[test]
fn sweeps_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let run = cdwce(&with(&["sweep-alpha", "--alphas", "1,3", "--out", a.to_str().unwrap()], QUICK));
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let csv = fs::read_to_string(a.join("sweep_alpha.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("alpha,mean_qwk,std_qwk"));
    assert_eq!(csv.lines().count(), 3);

    let m = dir.path().join("m");
    let run = cdwce(&with(&["sweep-margin", "--margins", "0,0.05", "--out", m.to_str().unwrap()], QUICK));
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(fs::read_to_string(m.join("sweep_margin.csv")).unwrap().lines().count(), 3);
}

#[test]
fn gen_data_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    let run = cdwce(&["gen-data", "--samples", "1000", "--input-dim", "2", "--seed", "4", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("x0,x1,label"));
    let mut counts = [0usize; 4];
    for line in text.lines().skip(1) {
        counts[line.rsplit(',').next().unwrap().parse::<usize>().unwrap()] += 1;
    }
    assert_eq!(counts, [541, 271, 111, 77]);

    let out = dir.path().join("bench");
    let run = cdwce(&[
        "bench", "--data", csv.to_str().unwrap(), "--losses", "corn", "--epochs", "2", "--trials", "1",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));

    let again = dir.path().join("again");
    let run = cdwce(&[
        "report", out.join("aggregate.json").to_str().unwrap(), "--format", "csv", "--out", again.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0);
    assert_eq!(fs::read(out.join("trials.csv")).unwrap(), fs::read(again.join("trials.csv")).unwrap());

    let run = cdwce(&["report", out.join("aggregate.json").to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    assert_eq!(run.stdout, fs::read(out.join("summary.md")).unwrap());
}

#[test]
fn silhouette_of_imported_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("emb.csv");
    fs::write(&csv, "u,label\n0,0\n1,0\n10,1\n11,1\n").unwrap();
    let run = cdwce(&["silhouette", csv.to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    let s: f64 = String::from_utf8(run.stdout).unwrap().trim().parse().unwrap();
    assert!((s - 0.89975).abs() < 1e-5);
}

fn assert_config_error(args: &[&str]) {
    let run = cdwce(args);
    assert_eq!(code(&run), 1, "{args:?}: {}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn configuration_problems_exit_with_one() {
    assert_config_error(&["bench", "--trials", "0"]);
    assert_config_error(&["bench", "--losses", "cdw_ce:0"]);
    assert_config_error(&["bench", "--no-such-flag"]);
    assert_config_error(&["sweep-alpha", "--alphas", "2,2"]);
    assert_config_error(&["sweep-margin", "--margins", "0.5"]);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"n_trials": 2, "unknown": true}"#).unwrap();
    assert_config_error(&["bench", "--config", cfg.to_str().unwrap()]);
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "x0,label\n1.0,0\nabc,1\n").unwrap();
    assert_config_error(&["bench", "--data", csv.to_str().unwrap()]);
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let run = cdwce(&["report", missing.to_str().unwrap()]);
    assert_eq!(code(&run), 2);

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = Path::new(&blocker).join("sub");
    let run = cdwce(&with(&["bench", "--losses", "ce", "--out", out.to_str().unwrap()], QUICK));
    assert_eq!(code(&run), 2);
}

#[test]
fn help_exits_cleanly() {
    let run = cdwce(&["--help"]);
    assert_eq!(code(&run), 0);
    assert!(String::from_utf8(run.stdout).unwrap().contains("sweep-alpha"));
}
