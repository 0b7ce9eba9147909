use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn greenlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greenlab"))
        .args(args)
        .env("GREENLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

/// The main report: `{experiment}_{hash}.json`.
fn report_path(dir: &Path) -> PathBuf {
    let hits: Vec<_> = files(dir)
        .into_iter()
        .filter(|p| {
            let s = p.file_name().unwrap().to_string_lossy().into_owned();
            s.ends_with(".json") && s.matches('.').count() == 1
        })
        .collect();
    assert_eq!(hits.len(), 1, "{hits:?}");
    hits[0].clone()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(report_path(dir)).unwrap()).unwrap()
}

const SOLVE: &str = r#"
seed = 4
[grid]
cells = 6
[domain]
kind = "box"
[coefficients]
kind = "random"
oscillation = 0.3
seed = 2
"#;

fn run(exp: &str, cfg_text: &str, extra: &[&str]) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", cfg_text);
    let out = dir.path().join("out");
    let mut args = vec![exp, "--config", &cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = greenlab(&args);
    (o, dir)
}

#[test]
fn zero_rhs_solve_reports_zero_fields() {
    let (o, dir) = run("solve", &format!("{SOLVE}\n[rhs]\nkind = \"zero\"\n"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let v = report(&out);
    assert_eq!(v["status"], "pass");
    assert_eq!(v["seed"], 4);
    for key in ["velocity_l2", "velocity_max", "pressure_l2", "gradient_l2", "iterations"] {
        assert_eq!(v["metrics"][key], 0.0, "{key}");
    }
    let dump = files(&out).into_iter().find(|p| p.to_string_lossy().ends_with(".solution.bin")).unwrap();
    let bin = fs::read(dump).unwrap();
    assert!(!bin.is_empty() && bin.iter().all(|&b| b == 0));
}

#[test]
fn missing_coefficient_block_is_a_config_error() {
    let text = SOLVE.replace("[coefficients]\nkind = \"random\"\noscillation = 0.3\nseed = 2\n", "");
    let (o, dir) = run("solve", &text, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("[coefficients]"), "{err}");
    assert!(!dir.path().join("out").exists());
    // the operator-only experiments do not need it
    let (o, _) = run("bogovskii", &text, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn validation_lists_every_problem() {
    let text = "[grid]\ncells = 1\n[solver]\ntol = 0.5\n";
    let (o, _) = run("lq-sweep", text, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["grid.cells", "[domain]", "[coefficients]", "solver.tol"] {
        assert!(err.contains(needle), "{needle} missing from {err}");
    }
    let (o, _) = run("symmetry", &format!("experiment = \"solve\"\n{SOLVE}"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let (o, _) = run("not-an-experiment", SOLVE, &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SOLVE);
    let mut snapshots = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = greenlab(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        let mut snap = Vec::new();
        for p in files(&out) {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            if name.ends_with(".timing.json") || name.ends_with(".solves.jsonl") {
                continue;
            }
            snap.push((name, fs::read(&p).unwrap()));
        }
        snapshots.push(snap);
    }
    assert_eq!(snapshots[0].len(), 4);
    assert_eq!(snapshots[0], snapshots[1]);
    // a different seed is a different experiment
    let out = dir.path().join("c");
    greenlab(&["solve", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "5"]);
    let v = report(&out);
    assert_eq!(v["seed"], 5);
    assert!(!snapshots[0].iter().any(|(n, _)| report_path(&out).ends_with(n)));
}

#[test]
fn sweep_csv_has_one_row_per_sweep_value() {
    let text = format!("{SOLVE}\n[sweep]\ntrials = 3\nq = [2.0, 3.0, 4.0, 6.0]\n");
    let (o, dir) = run("lq-sweep", &text, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let csv = fs::read_to_string(report_path(&out).with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(csv.starts_with("q,lq_sup\n"));
    let solves = files(&out).into_iter().find(|p| p.to_string_lossy().ends_with(".solves.jsonl")).unwrap();
    assert_eq!(fs::read_to_string(solves).unwrap().lines().count(), 3);
}

#[test]
fn asserted_invariant_failure_exits_one() {
    let text = format!("{SOLVE}\n[green]\nepsilon_h = 1.0\n[sweep]\ntrials = 1\ntolerance = 1e-30\n").replace("cells = 6", "cells = 8");
    let (o, dir) = run("symmetry", &text, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let v = report(&dir.path().join("out"));
    assert_eq!(v["status"], "invariant_failure");
    assert!(v["failures"][0].as_str().unwrap().contains("trial 0"));
}

#[test]
fn solver_failure_exits_three_and_names_the_trial() {
    let text = format!("{SOLVE}\n[solver]\nmax_iter = 2\n[sweep]\ntrials = 2\n");
    let (o, dir) = run("lq-sweep", &text, &[]);
    assert_eq!(o.status.code(), Some(3));
    let v = report(&dir.path().join("out"));
    assert_eq!(v["status"], "solver_failure");
    assert!(v["failures"][0].as_str().unwrap().starts_with("trial 0"));
}

#[test]
fn json_config_accepted() {
    let json = r#"{"experiment": "infsup", "grid": {"cells": 4}, "domain": {"kind": "box"}}"#;
    let (o, dir) = run("infsup", json, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = report(&dir.path().join("out"));
    assert!(v["metrics"]["beta"].as_f64().unwrap() > 0.0);
    assert!(v["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
}

#[test]
fn bad_thread_count_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SOLVE);
    let o = Command::new(env!("CARGO_BIN_EXE_greenlab"))
        .args(["solve", "--config", &cfg, "--out", dir.path().to_str().unwrap()])
        .env("GREENLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
