//! End-to-end checks of the `adleg` binary: exit statuses, output files and
//! factor-cache reuse.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn adleg(args: &[&str], cache_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_adleg"));
    cmd.args(args).env_remove("ADLEGS_CACHE");
    if let Some(dir) = cache_env {
        cmd.env("ADLEGS_CACHE", dir);
    }
    cmd.output().expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs").join(name)
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn zero_load_terminates_after_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cache = dir.path().join("cache");
    let res = adleg(&["solve", "--config", arg(&config("zero_load.json")), "--out", arg(&out), "--cache", arg(&cache)], None);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let trace = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2, "constants line plus one iteration");
    assert_eq!(lines[0]["record"], "constants");
    assert_eq!(lines[1]["record"], "iteration");
    assert_eq!(lines[1]["n"], 0);
    assert_eq!(lines[1]["est_next"], 0.0);
    for f in ["summary.csv", "sparsity.json", "solution_curve.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn infeasible_delta_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = adleg(
        &["solve", "--config", arg(&config("infeasible_delta.json")), "--out", arg(dir.path()), "--cache", arg(dir.path())],
        None,
    );
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("delta"));
    assert!(!dir.path().join("trace.jsonl").exists());
}

#[test]
fn malformed_input_and_bad_flags_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"theta": 0.9, "delta": 0.1, "tol": 1e-6, "p_max": 12, "bogus": 1}"#).unwrap();
    let res = adleg(&["solve", "--config", arg(&bad), "--out", arg(dir.path())], Some(dir.path()));
    assert_eq!(res.status.code(), Some(1));
    let res = adleg(&["solve", "--config", arg(&dir.path().join("missing.json"))], Some(dir.path()));
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(adleg(&["basis", "--p", "not-a-number"], None).status.code(), Some(1));
    assert_eq!(adleg(&["frobnicate"], None).status.code(), Some(1));
}

#[test]
fn exhausting_p_max_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.json");
    fs::write(
        &cfg,
        r#"{"theta": 0.999, "delta": 0.02, "tol": 1e-12, "tol_G": 0.1, "p_max": 16,
            "problem": {"nu": {"type": "constant", "value": 1.0}, "f": {"type": "constant", "value": 1.0}}}"#,
    )
    .unwrap();
    let res = adleg(&["solve", "--config", arg(&cfg), "--out", arg(dir.path())], Some(dir.path()));
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("p_max"));
}

#[test]
fn basis_sweep_populates_and_reuses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("env-cache");
    let out = dir.path().join("out");
    let args = ["basis", "--p", "24", "--from", "12", "--step", "12", "--out", arg(&out)];
    let first = adleg(&args, Some(&cache));
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let files = |d: &Path| -> Vec<(String, std::time::SystemTime)> {
        let mut v: Vec<_> = fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap())
            .map(|e| (e.file_name().to_string_lossy().into_owned(), e.metadata().unwrap().modified().unwrap()))
            .collect();
        v.sort();
        v
    };
    let cached = files(&cache);
    assert_eq!(cached.len(), 2, "one factor per swept degree");
    assert!(cached.iter().all(|(name, _)| name.ends_with(".adcf") && name.len() == 24 + 5));
    let sweep = fs::read_to_string(out.join("sweep_threshold_ee.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);

    let second = adleg(&args, Some(&cache));
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(files(&cache), cached, "cached factors are reused, not rewritten");
    assert_eq!(fs::read_to_string(out.join("sweep_threshold_ee.csv")).unwrap(), sweep);
}

#[test]
fn randomized_checks_pass() {
    let res = adleg(&["check", "--seed", "7", "--cases", "40"], None);
    assert_eq!(res.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{stdout}");
}
