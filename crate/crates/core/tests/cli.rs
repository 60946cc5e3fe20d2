use std::process::{Command, Output};

use ellipsys::harness::ExperimentConfig;

fn ellipsys(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ellipsys"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn echo_config_applies_overrides() {
    let o = ellipsys(&["--points", "32", "--rho", "0.2", "--seed", "9", "--echo-config", "solve"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = ExperimentConfig::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg.grid.points, 32);
    assert_eq!(cfg.operator.rho, Some(0.2));
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.fit.sampler.seed, 9);
}

#[test]
fn solve_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = ellipsys(&["--points", "32", "--rho", "0.3", "--band", "4", "--out-dir", out, "solve"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["status"], "converged");
    for f in ["solve_trace.csv", "solve_slice.csv", "solve_solution.bin", "solve_report.json", "config_echo.toml"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let echoed = std::fs::read_to_string(dir.path().join("config_echo.toml")).unwrap();
    let again = dir.path().join("again");
    let cfg_path = dir.path().join("config_echo.toml");
    let o2 = ellipsys(&["--config", cfg_path.to_str().unwrap(), "--out-dir", again.to_str().unwrap(), "solve"]);
    assert!(o2.status.success(), "{}", stderr(&o2));
    assert!(!echoed.is_empty());
    assert_eq!(
        std::fs::read(dir.path().join("solve_trace.csv")).unwrap(),
        std::fs::read(again.join("solve_trace.csv")).unwrap()
    );
}

#[test]
fn linear_solve_from_rhs_file() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = ellipsys(&["--points", "16", "--band", "3", "--out-dir", first.to_str().unwrap(), "solve-linear"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let field = first.join("solve_linear_solution.bin");
    let o = ellipsys(&["--points", "16", "--rhs-file", field.to_str().unwrap(), "solve-linear"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["error_l2"].is_null());
    assert!(report["linear"]["residual_l2"].as_f64().unwrap() < 1e-10);
}

#[test]
fn failures_name_the_stage() {
    let o = ellipsys(&["--tensor", "example2", "--m", "4", "certify"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stage 'tensor'"), "{}", stderr(&o));

    let o = ellipsys(&["--points", "16", "solve-stability"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stage 'config'"), "{}", stderr(&o));

    let o = ellipsys(&["--points", "16", "--band", "5", "solve"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("M/4"), "{}", stderr(&o));
}

#[test]
fn unsatisfiable_run_exits_with_verdict_code() {
    let o = ellipsys(&["--points", "16", "--band", "4", "--rho", "0.3", "--max-iters", "1", "solve"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("stage 'solve'"));
}

#[test]
fn study_prints_table() {
    let o = ellipsys(&["study", "--points-list", "8,16"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("points,error_l2"));
    assert_eq!(text.lines().count(), 3);
}
