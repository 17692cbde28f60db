use std::path::Path;
use std::process::{Command, Output};

fn qmeas(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    Command::new(env!("CARGO_BIN_EXE_qmeas"))
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn zeno_run_writes_table_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qmeas(tmp.path(), "scenario = \"zeno\"\n[run]\nkappas = [0.1, 1, 10, 100]\n", &["--seed", "42"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("zeno: 4 kappa values"));
    let csv = std::fs::read_to_string(tmp.path().join("out/zeno.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 42);
    assert_eq!(summary["monotone"], true);
}

#[test]
fn quiet_suppresses_summary_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qmeas(tmp.path(), "scenario = \"lindblad\"\n", &["--quiet"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
}

#[test]
fn invalid_config_exits_one_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qmeas(tmp.path(), "scenario = \"lindblad\"\n[grid]\ndt = 0\n", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config line 3: dt must be positive"));
}

#[test]
fn numerical_failure_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qmeas(tmp.path(), "scenario = \"chm\"\n[model]\nkappa = 1e6\n[grid]\ndt = 0.1\nn_steps = 2\n", &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn worker_env_fallback_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "scenario = \"sse-ensemble\"\n[grid]\nn_steps = 100\n[run]\nn_traj = 100\n").unwrap();
    let run = |env: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let status = Command::new(env!("CARGO_BIN_EXE_qmeas"))
            .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"])
            .env("QMEAS_WORKERS", env)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out.join("sse_ensemble.csv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("3", "b"));
}

#[test]
fn recorded_readout_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let first = qmeas(tmp.path(), "scenario = \"chm\"\n[run]\nreadout = 0.7\n[grid]\nn_steps = 20\n", &["--quiet"]);
    assert!(first.status.success());
    let record = tmp.path().join("out/record.csv");
    let moved = tmp.path().join("record.csv");
    std::fs::rename(&record, &moved).unwrap();
    let before = std::fs::read_to_string(tmp.path().join("out/summary.json")).unwrap();
    let cfg = format!("scenario = \"chm\"\n[run]\nrecord = \"{}\"\n", moved.display());
    let second = qmeas(tmp.path(), &cfg, &["--quiet"]);
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    let after = std::fs::read_to_string(tmp.path().join("out/summary.json")).unwrap();
    let (b, a): (serde_json::Value, serde_json::Value) = (serde_json::from_str(&before).unwrap(), serde_json::from_str(&after).unwrap());
    for key in ["log_density", "final_log_norm", "final_expectation_a"] {
        let (x, y) = (b[key].as_f64().unwrap(), a[key].as_f64().unwrap());
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{key}: {x} vs {y}");
    }
}
