use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atomic-mmv"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, n: &str, r: &str, l: &str, seed: &str) -> Output {
    run(
        dir,
        &["--seed", seed, "synth", "--n", n, "--r", r, "--L", l],
    )
}

#[test]
fn synth_is_deterministic_and_records_provenance() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert!(synth(a.path(), "32", "4", "2", "9").status.success());
    assert!(synth(b.path(), "32", "4", "2", "9").status.success());
    let ta = fs::read_to_string(a.path().join("instance.json")).unwrap();
    let tb = fs::read_to_string(b.path().join("instance.json")).unwrap();
    assert_eq!(ta, tb);
    let v: Value = serde_json::from_str(&ta).unwrap();
    assert_eq!(v["command"], "synth");
    assert_eq!(v["config"]["seed"], 9);
    assert!(v["tool_version"].is_string());
}

#[test]
fn infeasible_separation_is_a_config_error() {
    let d = TempDir::new().unwrap();
    let out = synth(d.path(), "8", "8", "1", "1");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("separated"));
}

#[test]
fn full_observation_solve_is_exact_and_certifies() {
    let d = TempDir::new().unwrap();
    assert!(synth(d.path(), "32", "3", "2", "4").status.success());
    let inst = d.path().join("instance.json");
    let out = run(
        d.path(),
        &[
            "--seed",
            "4",
            "solve",
            "--instance",
            inst.to_str().unwrap(),
            "--m",
            "32",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let sol = json(&d.path().join("solution.json"));
    assert!(sol["nmse"].as_f64().unwrap() < 1e-8);
    assert_eq!(sol["config"]["omega"].as_array().unwrap().len(), 32);
    assert!(String::from_utf8_lossy(&out.stdout).contains("nmse"));

    let out = run(
        d.path(),
        &[
            "certify",
            "--instance",
            inst.to_str().unwrap(),
            "--solution",
            d.path().join("solution.json").to_str().unwrap(),
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cert = json(&d.path().join("certificate.json"));
    assert_eq!(cert["localized"].as_array().unwrap().len(), 3);
    assert_eq!(cert["vandermonde_freqs"].as_array().unwrap().len(), 3);
    assert!(cert["route_agreement"].as_f64().unwrap() < 1e-6);
}

#[test]
fn omega_file_and_baseline() {
    let d = TempDir::new().unwrap();
    assert!(synth(d.path(), "16", "2", "1", "3").status.success());
    let omega = d.path().join("omega.json");
    fs::write(&omega, "[0, 2, 3, 5, 8, 9, 11, 14]").unwrap();
    let inst = d.path().join("instance.json");
    let out = run(
        d.path(),
        &[
            "baseline",
            "--instance",
            inst.to_str().unwrap(),
            "--omega",
            omega.to_str().unwrap(),
            "--c",
            "2",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let b = json(&d.path().join("baseline.json"));
    assert_eq!(b["oversampling"], 2);
    assert_eq!(b["config"]["omega"].as_array().unwrap().len(), 8);
    assert!(b["nmse"].as_f64().unwrap().is_finite());
}

#[test]
fn missing_instance_is_an_io_error() {
    let d = TempDir::new().unwrap();
    let out = run(
        d.path(),
        &["solve", "--instance", "does-not-exist.json", "--m", "4"],
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn iteration_cap_exits_with_nonconvergence_after_writing() {
    let d = TempDir::new().unwrap();
    assert!(synth(d.path(), "16", "2", "1", "2").status.success());
    let cfg = d.path().join("solve.toml");
    fs::write(&cfg, "[solver]\nmax_iters = 3\n").unwrap();
    let inst = d.path().join("instance.json");
    let out = run(
        d.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "solve",
            "--instance",
            inst.to_str().unwrap(),
            "--m",
            "8",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let sol = json(&d.path().join("solution.json"));
    assert_eq!(sol["solution"]["converged"], false);
    assert_eq!(sol["config"]["solver"]["max_iters"], 3);
}

#[test]
fn unknown_config_field_is_named() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("bad.toml");
    fs::write(&cfg, "n = 16\nm = 8\nL = 1\nr = 2\ntrails = 3\n").unwrap();
    let out = run(d.path(), &["--config", cfg.to_str().unwrap(), "phase"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trails"));
}

#[test]
fn phase_writes_summary_and_tables() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("tiny.toml");
    fs::write(
        &cfg,
        "n = 16\nm = 8\nL = [1, 2]\nr = [1, 3]\ntrials = 2\nseed = 1\n",
    )
    .unwrap();
    let out = run(
        d.path(),
        &["--config", cfg.to_str().unwrap(), "--seed", "6", "phase"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = json(&d.path().join("phase_summary.json"));
    assert_eq!(summary["config"]["seed"], 6);
    assert_eq!(summary["rows"].as_array().unwrap().len(), 8);
    let rates = fs::read_to_string(d.path().join("phase_rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 5);
    assert!(rates.starts_with("r,L,m,method,trials,successes,success_rate,median_nmse"));
    let trials = fs::read_to_string(d.path().join("phase_trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 9);
}

#[test]
fn sweep_and_dual_trace() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("tiny.toml");
    fs::write(
        &cfg,
        "n = 16\nm = [8, 16]\nL = [1, 2]\nr = 2\ntrials = 1\nseed = 3\nmethods = [\"atomic\", \"cs_basis\"]\ngrid_size = 512\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let out = run(d.path(), &["--config", c, "sweep-m"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let curves = fs::read_to_string(d.path().join("sweep_curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2 * 2 * 2);

    let out = run(d.path(), &["--config", c, "dualpoly"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let trace = fs::read_to_string(d.path().join("dualpoly.csv")).unwrap();
    assert!(trace.starts_with("L,kind,f,q_norm"));
    let grid_rows = trace.lines().filter(|l| l.contains(",grid,")).count();
    assert_eq!(grid_rows, 2 * 512);
    assert!(d.path().join("dualpoly.json").exists());
}
