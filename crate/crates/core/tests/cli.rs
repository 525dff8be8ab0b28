use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sac"))
        .args(args)
        .output()
        .expect("sac binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Tiny configuration that keeps every study under a second.
fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
  "grid": {{ "extent": [1.0], "cells": [16] }},
  "stepper": {{ "dt": 0.01, "t_end": 0.05 }},
  "ensemble": {{ "replicates": 4, "seed": 7, "lambda_levels": [0.2, 0.1, 0.05] }},
  "output_dir": "{}"{extra}
}}"#,
        dir.join("out").display()
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn printed_defaults_match_golden_file() {
    let o = sac(&["simulate", "--print-config"]);
    assert_eq!(code(&o), 0);
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    let golden: Value =
        serde_json::from_str(include_str!("golden/default_config.json")).unwrap();
    assert_eq!(printed, golden);
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sac(&["bogus"])), 2);
    assert_eq!(code(&sac(&["oracles", "--config", "/nonexistent/sac.json"])), 2);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{ "potential": { "c": 0.5 } }"#).unwrap();
    let o = sac(&["oracles", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("potential.c"));

    let typo = dir.path().join("typo.json");
    fs::write(&typo, r#"{ "ensemble": { "replicate": 3 } }"#).unwrap();
    assert_eq!(code(&sac(&["oracles", "--config", typo.to_str().unwrap()])), 2);

    let strong_force = small_config(dir.path(), r#", "forcing": { "type": "constant", "value": 1.5 }"#);
    assert_eq!(code(&sac(&["derivative", "--config", &strong_force])), 2);

    let cfg = small_config(dir.path(), "");
    assert_eq!(code(&sac(&["simulate", "--config", &cfg, "--threads", "0"])), 2);
}

#[test]
fn simulate_writes_artifacts_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = sac(&["simulate", "--config", &cfg, "--snapshot-stride", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["simulate.csv", "simulate.json", "manifest.json", "trajectory.csv", "final.bin"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(out.join("snapshots/step_000000.bin").is_file());
    assert!(out.join("snapshots/step_000004.bin").is_file());
    let first = fs::read(out.join("trajectory.csv")).unwrap();
    let final_first = fs::read(out.join("final.bin")).unwrap();

    assert_eq!(code(&sac(&["simulate", "--config", &cfg])), 0);
    assert_eq!(fs::read(out.join("trajectory.csv")).unwrap(), first);
    assert_eq!(fs::read(out.join("final.bin")).unwrap(), final_first);

    let manifest: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["passed"], true);
}

#[test]
fn seed_override_changes_hash_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("out");
    let read = || {
        let m: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
        (m["config_hash"].as_str().unwrap().to_owned(), fs::read(out.join("uniform.csv")).unwrap())
    };
    sac(&["uniform", "--config", &cfg]);
    let (h1, c1) = read();
    sac(&["uniform", "--config", &cfg]);
    let (h2, c2) = read();
    sac(&["uniform", "--config", &cfg, "--seed", "8"]);
    let (h3, c3) = read();
    assert_eq!(h1, h2);
    assert_eq!(c1, c2);
    assert_ne!(h1, h3);
    assert_ne!(c1, c3);
}

#[test]
fn oracles_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = sac(&["oracles", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    assert!(dir.path().join("out/oracles.csv").is_file());
}

#[test]
fn failing_check_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // Levels far apart on a long horizon leave the lambda band.
    let cfg = dir.path().join("wide.json");
    fs::write(
        &cfg,
        format!(
            r#"{{
  "grid": {{ "extent": [1.0], "cells": [16] }},
  "stepper": {{ "dt": 0.01, "t_end": 1.0 }},
  "initial": {{ "type": "constant", "value": 0.3 }},
  "noise": {{ "family": "sine", "modes": 0, "decay_exponent": 2.0, "amplitude": 0.0 }},
  "ensemble": {{ "replicates": 2, "seed": 1, "lambda_levels": [0.24, 0.001] }},
  "output_dir": "{}"
}}"#,
            dir.path().join("out").display()
        ),
    )
    .unwrap();
    let o = sac(&["uniform", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stderr).contains("failed:"));
}
