use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fkpath"));
    cmd.env_remove("FKPATH_THREADS");
    cmd
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn free_propagator_is_the_heat_kernel_with_zero_stderr() {
    let out = run(&["mc", "--config", config("heat_mc.json").to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let mean = doc["rows"][0]["mean"].as_f64().unwrap();
    assert!((mean - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
    assert_eq!(doc["rows"][0]["stderr"].as_f64(), Some(0.0));
    assert_eq!(doc["seed"].as_u64(), Some(7));
    assert!(doc["version"].as_str().unwrap().starts_with('v'));
    assert_eq!(doc["config"]["mc"]["x"], serde_json::json!([0.0]));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("mehler_mc.json");
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "3", "1"].iter().enumerate() {
        let path = dir.path().join(format!("run{i}.json"));
        let out = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            path.to_str().unwrap(),
            "--format",
            "json",
            "--threads",
            threads,
            "--sampling.n_paths=4000",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn threads_default_comes_from_the_environment() {
    let cfg = config("dst_lattice.json");
    let a = run(&["--config", cfg.to_str().unwrap(), "--sampling.n_paths=200"]);
    let b = bin().env("FKPATH_THREADS", "2").args(["--config", cfg.to_str().unwrap(), "--sampling.n_paths=200"]).output().unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let bad = bin().env("FKPATH_THREADS", "many").args(["--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn seed_override_changes_the_estimate() {
    let cfg = config("mehler_mc.json");
    let a = run(&["--config", cfg.to_str().unwrap(), "--sampling.n_paths=500"]);
    let b = run(&["--config", cfg.to_str().unwrap(), "--sampling.n_paths=500", "--sampling.seed=8"]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn verify_kernels_suite_passes() {
    let out = run(&["verify", "--suite", "kernels"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("id,name,passed,detail"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.contains(",true,")));
}

#[test]
fn unknown_keys_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), r#"{"command": "mc", "mc": {"x": [0], "y": [0], "colour": "red"}}"#);
    let out = run(&["--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
    let out = run(&["--config", config("heat_mc.json").to_str().unwrap(), "--sampling.colour=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_and_command_mismatch_are_validation_errors() {
    assert_eq!(run(&["mc"]).status.code(), Some(2));
    assert_eq!(run(&["lattice", "--config", config("heat_mc.json").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["--config", "/nonexistent/config.json"]).status.code(), Some(2));
}

#[test]
fn library_domain_errors_exit_2_and_numerical_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), r#"{"command": "kernel", "kernel": {"model": {"kind": "ou", "theta": -1}, "x": 0, "y": {"lo": 0, "hi": 0, "nodes": 1}}}"#);
    assert_eq!(run(&["--config", path.to_str().unwrap()]).status.code(), Some(2));
    let out = run(&["--config", config("dst_lattice.json").to_str().unwrap(), "--grid.steps=1", "--lattice.x0=[1e200]"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn csv_headers_are_fixed_per_command() {
    for (file, header) in [
        ("ou_kernel.json", "t,x,y,value"),
        ("heat_mc.json", "mean,stderr,n_paths"),
        ("dst_lattice.json", "t,site,mean,stderr"),
        ("quench.json", "t,y,value"),
        ("heat_spde.json", "t,x,value"),
    ] {
        let out = run(&["--config", config(file).to_str().unwrap(), "--sampling.n_paths=100"]);
        assert!(out.status.success(), "{file}: {}", String::from_utf8_lossy(&out.stderr));
        let csv = String::from_utf8(out.stdout).unwrap();
        assert_eq!(csv.lines().next(), Some(header), "{file}");
        let width = header.split(',').count();
        assert!(csv.lines().skip(1).all(|l| l.split(',').count() == width), "{file}");
    }
}

#[test]
fn csv_numbers_carry_17_significant_digits() {
    let out = run(&["--config", config("ou_kernel.json").to_str().unwrap()]);
    let csv = String::from_utf8(out.stdout).unwrap();
    let value = csv.lines().nth(1).unwrap().split(',').next_back().unwrap();
    let mantissa = value.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17);
}

#[test]
fn spde_snapshots_follow_the_stride() {
    let out = run(&["--config", config("heat_spde.json").to_str().unwrap()]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut times: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    times.dedup();
    assert_eq!(times.len(), 5);
    assert_eq!(*times.last().unwrap(), 0.1);
}

#[test]
fn config_file_is_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(config("quench.json")).unwrap();
    let path = write_config(dir.path(), &body);
    let out = run(&["--config", path.to_str().unwrap(), "--grid.t=3", "--out", dir.path().join("o.csv").to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), body);
}
