use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use fracvar::cli::read_field;
use fracvar::grid::{build_grid, DomainSpec};

const SMALL: &str = r#"{
  "seed": 3,
  "domain": {"dim": 1, "bounds": [[0, 1]], "nodes": [48]},
  "reaction": {"family": "saturating", "nu": 100}
}"#;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fracvar-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn fracvar(command: &str, config: &str, dir: &Path, env: &[(&str, &str)]) -> (Output, PathBuf) {
    let cfg = dir.join("config.in.json");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fracvar"));
    cmd.arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out);
    cmd.env_remove("FRACVAR_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    (cmd.output().unwrap(), out)
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_writes_tables_and_a_manifest() {
    let dir = scratch("verify");
    let (res, out) = fracvar("verify", SMALL, &dir, &[]);
    let manifest = json(out.join("manifest.json"));
    // a failed identity is a numerical outcome, not a crash
    let passed = manifest["summary"]["all_passed"].as_bool().unwrap();
    assert_eq!(res.status.code(), Some(if passed { 0 } else { 1 }));
    assert_eq!(
        manifest["status"],
        if passed { "success" } else { "solver-failure" }
    );
    assert_eq!(manifest["command"], "verify");
    let listed: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    for name in [
        "config.json",
        "verify.json",
        "identities.csv",
        "composition.csv",
    ] {
        assert!(listed.contains(&name), "{name} missing from {listed:?}");
    }
    let csv = std::fs::read_to_string(out.join("identities.csv")).unwrap();
    assert!(csv.starts_with("check,value,tolerance,passed\n"));
}

#[test]
fn eig_reports_lambda1_and_persists_the_full_config() {
    let dir = scratch("eig");
    let (res, out) = fracvar("eig", SMALL, &dir, &[]);
    assert_eq!(res.status.code(), Some(0));
    let manifest = json(out.join("manifest.json"));
    let lambda = manifest["summary"]["lambda1"].as_f64().unwrap();
    assert!(lambda > 0.0 && lambda.is_finite());
    // defaults are written out so the run can be replayed from config.json alone
    let cfg = json(out.join("config.json"));
    assert_eq!(cfg["seed"], 3);
    assert!(cfg["operator"]["s"].is_number());
    assert!(cfg["solver"]["max_iterations"].is_number());
}

#[test]
fn solve_writes_a_readable_field() {
    let dir = scratch("solve");
    let (res, out) = fracvar("solve", SMALL, &dir, &[]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let grid = build_grid(DomainSpec::interval(0.0, 1.0, 48)).unwrap();
    let u = read_field(out.join("solution.fvfd"), &grid).unwrap();
    assert!(u.min_value() >= 0.0);
    assert!(u.values().iter().any(|v| *v > 0.0));
    let summary: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert!(summary["energy"].as_f64().unwrap() < 0.0);
}

#[test]
fn solver_failure_exits_with_one() {
    let dir = scratch("failure");
    let cfg = r#"{
      "domain": {"dim": 1, "bounds": [[0, 1]], "nodes": [48]},
      "reaction": {"family": "saturating", "nu": 100},
      "solver": {"max_iterations": 1}
    }"#;
    let (res, out) = fracvar("solve", cfg, &dir, &[]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(json(out.join("manifest.json"))["status"], "solver-failure");
}

#[test]
fn config_errors_exit_with_two() {
    let cases = [
        (
            "unknown-key",
            r#"{"domain": {"dim": 1, "bounds": [[0, 1]], "nodes": [32]}, "reactoin": {}}"#,
        ),
        (
            "bad-order",
            r#"{"domain": {"dim": 1, "bounds": [[0, 1]], "nodes": [32]}, "operator": {"s": 1.5}}"#,
        ),
        ("not-json", "{ domain"),
    ];
    for (name, cfg) in cases {
        let dir = scratch(name);
        let (res, out) = fracvar("eig", cfg, &dir, &[]);
        assert_eq!(res.status.code(), Some(2), "{name}");
        assert_eq!(
            json(out.join("manifest.json"))["status"],
            "config-error",
            "{name}"
        );
    }
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let dir = scratch("threads");
    let (res, _) = fracvar("eig", SMALL, &dir, &[("FRACVAR_THREADS", "many")]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn mpass_refuses_a_sublinear_reaction() {
    let dir = scratch("mpass");
    let (res, _) = fracvar("mpass", SMALL, &dir, &[]);
    assert_eq!(res.status.code(), Some(2));
}
