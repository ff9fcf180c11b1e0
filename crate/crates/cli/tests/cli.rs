use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BESSEL_QUOTIENT: f64 = 0.446_389_965_896_5;

fn steklov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steklov")).args(args).output().expect("binary runs")
}

fn run(cmd: &str, dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.json");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    steklov(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn printed_lambda(o: &Output) -> f64 {
    let text = stdout(o);
    let line = text.lines().find(|l| l.starts_with("lambda = ")).expect("lambda line");
    line["lambda = ".len()..].trim().parse().unwrap()
}

fn disk(h: f64, p: f64, sigma: f64, rest: &str) -> String {
    format!(r#"{{"version": 1, "geometry": {{"disk": {{"h": {h}}}}}, "params": {{"p": {p}, "sigma": {sigma}}}{rest}}}"#)
}

#[test]
fn solve_disk_matches_bessel_quotient() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("solve", dir.path(), &disk(0.1, 2.0, 0.0, r#", "potential": {"constant": {"c": 0}}"#), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!((printed_lambda(&o) - BESSEL_QUOTIENT).abs() < 1e-2);
    let pair = read_json(dir.path().join("out/eigenpair.json"));
    assert_eq!(pair["converged"], Value::Bool(true));
    let trace = std::fs::read_to_string(dir.path().join("out/boundary_trace.csv")).unwrap();
    assert!(trace.starts_with("s,u\n"));
    assert!(trace.lines().count() > 10);
}

#[test]
fn solve_constant_potential_shifts_by_sigma_c() {
    let dir = tempfile::tempdir().unwrap();
    let zero = run("solve", dir.path(), &disk(0.2, 2.0, 2.0, r#", "potential": {"constant": {"c": 0}}"#), &[]);
    let half = run("solve", dir.path(), &disk(0.2, 2.0, 2.0, r#", "potential": {"constant": {"c": 0.5}}"#), &[]);
    assert_eq!(code(&zero), 0);
    assert_eq!(code(&half), 0);
    let shift = printed_lambda(&half) - printed_lambda(&zero);
    assert!((shift - 1.0).abs() < 1e-9, "shift {shift}");
}

#[test]
fn missing_mesh_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "geometry": {"mesh_file": {"path": "nowhere.mesh"}},
                  "params": {"p": 2, "sigma": 1}, "potential": {"constant": {"c": 0}}}"#;
    let o = run("solve", dir.path(), cfg, &[]);
    assert_eq!(code(&o), 1);
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("solve", dir.path(), &disk(0.2, 2.0, 1.0, r#", "potentail": {"constant": {"c": 0}}"#), &[]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bad_invocation_exits_one() {
    assert_eq!(code(&steklov(&["frobnicate"])), 1);
    assert_eq!(code(&steklov(&["solve"])), 1);
    assert_eq!(code(&steklov(&["--help"])), 0);
}

fn square(p: f64, sigma: f64, rest: &str) -> String {
    format!(
        r#"{{"version": 1, "geometry": {{"rectangle": {{"width": 1, "height": 1, "target_h": 0.2}}}}, "params": {{"p": {p}, "sigma": {sigma}}}{rest}}}"#
    )
}

#[test]
fn optimize_full_mass_is_the_constant_shift() {
    let dir = tempfile::tempdir().unwrap();
    let base = run("solve", dir.path(), &square(2.0, 0.0, r#", "potential": {"constant": {"c": 0}}"#), &[]);
    let l0 = printed_lambda(&base);
    assert_eq!(code(&run("optimize", dir.path(), &square(2.0, 3.0, r#", "a": 4.5"#), &[])), 1);
    let o = run("optimize", dir.path(), &square(2.0, 3.0, r#", "a": 4.0"#), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = read_json(dir.path().join("out/trace.json"));
    let rows = trace.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    let lambda = rows[0]["lambda"].as_f64().unwrap();
    assert!((lambda - (l0 + 3.0)).abs() < 1e-9, "{lambda} vs {}", l0 + 3.0);
}

#[test]
fn optimize_trace_is_non_increasing_and_binarizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = disk(0.15, 2.0, 5.0, r#", "a": 1.2, "optimize": {"initial": {"random": {"seed": 7}}}"#);
    let o = run("optimize", dir.path(), &cfg, &["--binarize"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let lambdas: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(lambdas.len() >= 2);
    assert!(lambdas.windows(2).all(|w| w[1] <= w[0] + 1e-10), "{lambdas:?}");
    let potential = read_json(dir.path().join("out/potential.json"));
    let values = potential["edge_values"].as_array().unwrap();
    assert!(values.iter().all(|v| v.as_f64() == Some(0.0) || v.as_f64() == Some(1.0)));
    let summary = read_json(dir.path().join("out/optimize_summary.json"));
    assert_eq!(summary["fixed_point"], Value::Bool(true));
    assert!(summary["binarized_lambda"].is_number());
}

#[test]
fn sigma_sweep_is_monotone_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = disk(0.15, 2.0, 1.0, r#", "a": 1.5707963267948966, "sweep": {"sigmas": [1, 10, 100]}"#);
    let o = run("sigma-sweep", dir.path(), &cfg, &["--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("sigma,Lambda_sigma,Lambda_inf_reference"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[1][1] >= w[0][1]));
    assert!(rows.iter().all(|r| r[1] <= r[2] + 1e-8));
}

#[test]
fn sigma_sweep_rejects_descending_sigmas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = disk(0.2, 2.0, 1.0, r#", "a": 1.0, "sweep": {"sigmas": [10, 1]}"#);
    assert_eq!(code(&run("sigma-sweep", dir.path(), &cfg, &[])), 1);
}

#[test]
fn shape_deriv_zero_field_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = disk(0.2, 2.0, 1.0, r#", "shape": {"region": [[0.05, 1.6]], "speeds": [0, 0]}"#);
    let o = run("shape-deriv", dir.path(), &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(dir.path().join("out/shape_derivative.json"));
    assert_eq!(report["formula_value"].as_f64(), Some(0.0));
    assert_eq!(report["fd_value"].as_f64(), Some(0.0));
}

#[test]
fn shape_deriv_disk_case_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = disk(0.1, 2.0, 1.0, r#", "shape": {"region": [[0.05, 1.62]], "speeds": [0, 1]}"#);
    let o = run("shape-deriv", dir.path(), &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("sign consistent = true"));
}

#[test]
fn shape_deriv_collision_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = disk(
        0.2,
        2.0,
        1.0,
        r#", "shape": {"region": [[0.5, 0.7]], "speeds": [1, -1], "t_steps": [0.4, 0.2, 0.1]}"#,
    );
    assert_eq!(code(&run("shape-deriv", dir.path(), &cfg, &[])), 2);
}

#[test]
fn symmetry_check_on_rectangle_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "geometry": {"rectangle": {"width": 1, "height": 1, "target_h": 0.25}},
                  "params": {"p": 2, "sigma": 5}, "a": 1.0}"#;
    assert_eq!(code(&run("symmetry-check", dir.path(), cfg, &[])), 1);
}

#[test]
fn symmetry_check_disk_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("symmetry-check", dir.path(), &disk(0.1, 2.0, 5.0, r#", "a": 1.5707963267948966"#), &[]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report = read_json(dir.path().join("out/symmetry.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 5);
}

#[test]
fn symmetry_check_zero_mass_is_degenerate_success() {
    let dir = tempfile::tempdir().unwrap();
    let base = run("solve", dir.path(), &disk(0.2, 2.0, 5.0, r#", "potential": {"constant": {"c": 0}}"#), &[]);
    let l0 = printed_lambda(&base);
    let o = run("symmetry-check", dir.path(), &disk(0.2, 2.0, 5.0, r#", "a": 0"#), &[]);
    assert_eq!(code(&o), 0);
    let report = read_json(dir.path().join("out/symmetry.json"));
    for r in report["runs"].as_array().unwrap() {
        assert!((r["lambda"].as_f64().unwrap() - l0).abs() < 1e-9);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = disk(0.15, 1.5, 5.0, r#", "a": 1.0, "optimize": {"initial": {"random": {"seed": 3}}}"#);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&run("optimize", a.path(), &cfg, &["--jobs", "1"])), 0);
    assert_eq!(code(&run("optimize", b.path(), &cfg, &[])), 0);
    for name in ["trace.json", "trace.csv", "potential.json", "optimize_summary.json"] {
        let x = std::fs::read(a.path().join("out").join(name)).unwrap();
        let y = std::fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
}
