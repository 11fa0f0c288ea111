//! End-to-end checks of the `poroplate` binary: config parsing, artifact
//! layout, verdict aggregation and error reporting.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_poroplate"))
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    let text = format!(
        "[params]\nnu = 0.25\nalpha = 0.9\ngamma = 1.0\neps = 0.2\n\
         [grid]\nnx = 16\nnz = 4\n[time]\nt_end = 1.0\nnsteps = 2\n\
         [scenario]\nname = mixed\n{extra}"
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn solve_limit_writes_artifacts_and_report_aggregates() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "");

    let status = bin()
        .args(["solve-limit", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("limit_final_midsurface.csv").is_file());
    assert!(out.join("limit_energy.csv").is_file());
    assert!(out.join("verdicts.txt").is_file());
    // provenance header on every CSV
    let text = std::fs::read_to_string(out.join("limit_energy.csv")).unwrap();
    assert!(text.starts_with("# params.nu = 0.25"), "header echoes the config");

    let output = bin()
        .args(["report", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("overall: PASS"), "report summary: {stdout}");
    assert!(out.join("report.txt").is_file());
}

#[test]
fn solve_3d_honors_eps_flag_and_env_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("env-out");
    let cfg = write_config(tmp.path(), "[output]\nexport_matrices = true\n");
    let status = bin()
        .args(["solve-3d", "--eps", "0.3", "--config"])
        .arg(&cfg)
        .env("POROPLATE_OUT", &out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("biot_final_w.csv").is_file());
    assert!(out.join("matrix_a.mtx").is_file(), "optional matrix export");
    let text = std::fs::read_to_string(out.join("biot_final_w.csv")).unwrap();
    assert!(text.contains("run.eps = 0.3"));
}

#[test]
fn invalid_config_is_rejected_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.cfg");
    std::fs::write(&path, "[params]\nnu = 0.5\n").unwrap();
    let output = bin().args(["solve-limit", "--config"]).arg(&path).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("nu"), "error names the key: {stderr}");
}

#[test]
fn strict_flag_propagates_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "");
    // the limit energy identities hold even on a tiny run, so strict passes
    let status = bin()
        .args(["solve-limit", "--strict", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
}
