use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ewald(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ewald"));
    cmd.args(args).env_remove("EWALD_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("run.json");
    fs::write(&path, r#"{ "n_uniform": 48, "n_family": 24, "order": 5, "seed": 3 }"#).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn simulate_recover_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let data = dir.path().join("data");
    let data_s = data.to_string_lossy().into_owned();
    let sim = stdout_json(&ewald(&["simulate", "--config", &cfg, "--out", &data_s], &[]));
    assert_eq!(sim["records"], 72);
    let result = dir.path().join("result.json").to_string_lossy().into_owned();
    let rec = stdout_json(&ewald(
        &["recover", "--dataset", &data_s, "--order", "5", "--mode", "oracle", "--out", &result],
        &[("EWALD_THREADS", "2")],
    ));
    assert_eq!(rec["order"], 5);
    let truth = data.join("truth.json").to_string_lossy().into_owned();
    let cmp_path = dir.path().join("cmp.json").to_string_lossy().into_owned();
    let cmp = stdout_json(&ewald(&["compare", "--truth", &truth, "--result", &result, "--out", &cmp_path], &[]));
    assert!(cmp["max_relative_error"].as_f64().unwrap() <= 1e-8);
    assert_eq!(cmp["hand_match"], true);
    let saved: Value = serde_json::from_str(&fs::read_to_string(&cmp_path).unwrap()).unwrap();
    assert_eq!(saved, cmp);
}

#[test]
fn seed_override_changes_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a").to_string_lossy().into_owned();
    let b = dir.path().join("b").to_string_lossy().into_owned();
    stdout_json(&ewald(&["simulate", "--config", &cfg, "--out", &a], &[]));
    let sim = stdout_json(&ewald(&["--seed", "11", "simulate", "--config", &cfg, "--out", &b], &[]));
    assert_eq!(sim["seed"], 11);
    let read = |d: &str| fs::read(Path::new(d).join("record_000000.json")).unwrap();
    assert_ne!(read(&a), read(&b));
}

#[test]
fn demos_report_their_tables() {
    let hand = stdout_json(&ewald(&["demo", "hand"], &[]));
    assert_eq!(hand["flat_distance"].as_f64().unwrap(), 0.0);
    assert!(hand["curved_distance"].as_f64().unwrap() > 1e-3);
    let flat = stdout_json(&ewald(&["demo", "flat-limit"], &[]));
    let rows = flat["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for row in &rows[1..] {
        let r = row["ratio"].as_f64().unwrap();
        assert!((r - 2.0).abs() <= 0.5, "{r}");
    }
}

#[test]
fn selftest_passes() {
    let out = ewald(&["selftest"], &[("EWALD_THREADS", "1")]);
    let v = stdout_json(&out);
    assert_eq!(v["passed"], true);
}

#[test]
fn failures_emit_an_error_record() {
    let out = ewald(&["recover", "--dataset", "/nonexistent/dir", "--order", "5", "--out", "/tmp/unused.json"], &[]);
    assert!(!out.status.success());
    let line = String::from_utf8_lossy(&out.stderr);
    let v: Value = serde_json::from_str(line.trim()).expect("JSON error record");
    assert!(v["error"]["message"].as_str().unwrap().contains("manifest.json"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{ "order": 2 }"#).unwrap();
    let out = ewald(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], &[]);
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(v["error"]["message"].as_str().unwrap().contains("order"));
}
