use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ctrl-ransac"));
    cmd.env_remove("CTRL_RANSAC_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_dataset(dir: &TempDir, delta: &str, seed: &str) -> PathBuf {
    let path = dir.path().join(format!("data_{seed}.csv"));
    let out = run(&["gen", "-n", "60", "-p", "3", "--delta", delta, "--seed", seed, "-o", s(&path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_then_test_reports_every_anomaly() {
    let dir = TempDir::new().unwrap();
    let data = gen_dataset(&dir, "4", "7");
    let report = dir.path().join("r.json");
    let out = run(&["test", "-i", s(&data), "--method", "ctrl,naive", "--seed", "3", "-q", "-o", s(&report)]);
    assert_eq!(out.status.code(), Some(0));
    let doc = read_json(&report);
    let anomalies = doc["anomalies"].as_array().unwrap();
    assert!(!anomalies.is_empty());
    let reports = doc["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2 * anomalies.len());
    for r in reports {
        let p = r["p_value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn report_matches_schema() {
    let dir = TempDir::new().unwrap();
    let data = gen_dataset(&dir, "4", "11");
    let report = dir.path().join("r.json");
    let out = run(&["test", "-i", s(&data), "--method", "all", "-q", "-o", s(&report)]);
    assert_eq!(out.status.code(), Some(0));
    let schema: Value = serde_json::from_str(ctrl_ransac::io::REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let doc = read_json(&report);
    let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let data = gen_dataset(&dir, "4", "5");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let status = run(&["test", "-i", s(&data), "--method", "all", "--seed", "9", "-q", "-o", s(out)]);
        assert_eq!(status.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn seed_from_environment() {
    let dir = TempDir::new().unwrap();
    let data = gen_dataset(&dir, "4", "5");
    let via_flag = run(&["detect", "-i", s(&data), "--seed", "21"]);
    let via_env = bin()
        .args(["detect", "-i", s(&data)])
        .env("CTRL_RANSAC_SEED", "21")
        .output()
        .unwrap();
    assert_eq!(via_flag.stdout, via_env.stdout);
}

#[test]
fn nothing_detected_exits_two() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("line.csv");
    let rows: String = (0..20).map(|i| format!("{i},{}\n", 2 * i)).collect();
    std::fs::write(&data, format!("x1,y\n{rows}")).unwrap();
    assert_eq!(run(&["detect", "-i", s(&data)]).status.code(), Some(2));
    let out = run(&["test", "-i", s(&data), "-q"]);
    assert_eq!(out.status.code(), Some(2));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["reports"].as_array().unwrap().is_empty());
}

#[test]
fn input_errors_exit_three() {
    let dir = TempDir::new().unwrap();
    let no_y = dir.path().join("no_y.csv");
    std::fs::write(&no_y, "x1,x2\n1,2\n3,4\n").unwrap();
    assert_eq!(run(&["detect", "-i", s(&no_y)]).status.code(), Some(3));

    let garbage = dir.path().join("bad.csv");
    std::fs::write(&garbage, "x1,y\n1,abc\n").unwrap();
    assert_eq!(run(&["detect", "-i", s(&garbage)]).status.code(), Some(3));

    let missing = dir.path().join("missing.csv");
    assert_eq!(run(&["detect", "-i", s(&missing)]).status.code(), Some(3));
    assert_eq!(run(&["detect", "--no-such-flag"]).status.code(), Some(3));

    let data = gen_dataset(&dir, "4", "3");
    assert_eq!(run(&["test", "-i", s(&data), "--alpha", "1.5"]).status.code(), Some(3));
    assert_eq!(run(&["test", "-i", s(&data), "--method", "magic"]).status.code(), Some(3));
}

#[test]
fn csv_formats() {
    let dir = TempDir::new().unwrap();
    let data = gen_dataset(&dir, "4", "13");
    let det = run(&["detect", "-i", s(&data), "--format", "csv"]);
    assert_eq!(det.status.code(), Some(0));
    let text = String::from_utf8(det.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("index"));
    let test = run(&["test", "-i", s(&data), "--format", "csv", "-q"]);
    assert_eq!(test.status.code(), Some(0));
    let text = String::from_utf8(test.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("index,method,p_value,z_obs,var,region"));
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(1) == Some("ctrl")));
    assert!(text.lines().count() > 1);
}

#[test]
fn experiment_manifest_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let out = run(&[
        "experiment", "fpr", "-n", "30..40", "--step", "10", "--trials", "4", "-q", "--out-dir", s(&first),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(first.join("fpr.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    let manifest = first.join("manifest.json");
    let out = run(&["experiment", "--manifest", s(&manifest), "-q", "--out-dir", s(&second)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    // Everything but the wall-clock column must match.
    let strip = |text: &str| -> Vec<String> {
        text.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
    };
    assert_eq!(strip(&csv), strip(&std::fs::read_to_string(second.join("fpr.csv")).unwrap()));
}
