//! End-to-end tests of the `adiamag` binary: exit codes, artifact layout,
//! and byte-stable report emission.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adiamag"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn latitude_config(t_total: f64) -> String {
    format!(
        r#"{{
            "params": {{"omega_c": 2.7, "omega": 1.0, "a": 1.0, "t_total": {t_total}}},
            "path": {{"kind": "latitude", "theta0": 1.0471975511965976, "turns": 1}},
            "tolerances": {{"ode_tol": 1e-9, "quad_tol": 1e-9}},
            "seed": 7
        }}"#
    )
}

fn summary(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn geometry_latitude_reports_solid_angle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.json", &latitude_config(100.0));
    let out_dir = tmp.path().join("out");
    let out = run(&["geometry", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out_dir);
    let omega = s["solid_angle"].as_f64().unwrap();
    assert!((omega - std::f64::consts::PI).abs() < 1e-6, "solid angle {omega}");
    assert!((s["holonomy_angle"].as_f64().unwrap().abs() - std::f64::consts::PI).abs() < 1e-6);
    let frames = std::fs::read_to_string(out_dir.join("frames.csv")).unwrap();
    assert!(frames.starts_with("s,e1x,"));
    assert_eq!(frames.lines().count(), 402);
}

#[test]
fn geometry_open_path_omits_solid_angle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.json",
        r#"{
            "params": {"omega_c": 2.7, "omega": 1.0, "a": 1.0, "t_total": 100.0},
            "path": {"kind": "slerp",
                     "waypoints": [[0.0, 0.0, 1.0], [0.8, 0.0, 0.6]],
                     "closed": false}
        }"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run(&["geometry", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out_dir);
    assert_eq!(s["closed"], serde_json::Value::Bool(false));
    assert!(s.get("solid_angle").is_none());
}

#[test]
fn evolve_constant_path_sits_at_tolerance_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("path.csv");
    std::fs::write(&table, "0.0,0.0,0.0,1.0\n0.5,0.0,0.0,1.0\n1.0,0.0,0.0,1.0\n").unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.json",
        r#"{
            "params": {"omega_c": 2.7, "omega": 1.0, "a": 1.0, "t_total": 50.0},
            "path": {"kind": "table", "file": "path.csv"}
        }"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run(&["evolve", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out_dir);
    assert!(s["map_error"].as_f64().unwrap() < 1e-6);
    assert!(s["phi_p"].as_f64().unwrap().abs() < 1e-9);
    let trajectory = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(trajectory.starts_with("t,x1,"));
    assert_eq!(trajectory.lines().count(), 1002);
}

#[test]
fn evolve_reports_finite_phases_for_latitude_loop() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.json", &latitude_config(200.0));
    let out_dir = tmp.path().join("out");
    let out = run(&["evolve", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out_dir);
    let phi = s["phi_p"].as_f64().unwrap();
    let alpha = s["alpha"].as_f64().unwrap();
    let bound = s["alpha_minus_phi_p"].as_f64().unwrap().abs();
    assert!(phi.is_finite() && alpha.is_finite());
    assert!((alpha - phi).abs() <= bound + 1e-12);
    assert!(bound / phi.abs() < 0.2, "phase deviation {bound} too large");
    assert!(s["overlap_magnitude"].as_f64().unwrap() > 0.9);
}

#[test]
fn near_resonant_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.json",
        r#"{
            "params": {"omega_c": 1.0005, "omega": 1.0, "a": 1.0, "t_total": 100.0},
            "path": {"kind": "latitude", "theta0": 1.0, "turns": 1}
        }"#,
    );
    let out = run(&["evolve", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_tolerance_and_unknown_fields_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_tol = write_config(
        tmp.path(),
        "tol.json",
        r#"{
            "params": {"omega_c": 2.7, "omega": 1.0, "a": 1.0, "t_total": 100.0},
            "path": {"kind": "latitude", "theta0": 1.0, "turns": 1},
            "tolerances": {"ode_tol": 0.5, "quad_tol": 1e-9}
        }"#,
    );
    let out = run(&["evolve", "--config", &bad_tol, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let unknown = write_config(
        tmp.path(),
        "unknown.json",
        r#"{
            "params": {"omega_c": 2.7, "omega": 1.0, "a": 1.0, "t_total": 100.0},
            "path": {"kind": "latitude", "theta0": 1.0, "turns": 1},
            "extra": 1
        }"#,
    );
    let out = run(&["evolve", "--config", &unknown, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn converge_rejects_degenerate_sweeps() {
    let tmp = tempfile::tempdir().unwrap();
    for sweep in [r#"[100.0, 200.0]"#, r#"[100.0, 100.0, 200.0]"#] {
        let cfg = write_config(
            tmp.path(),
            "run.json",
            &format!(
                r#"{{
                    "params": {{"omega_c": 2.7, "omega": 1.0, "a": 1.0, "t_total": 100.0}},
                    "path": {{"kind": "latitude", "theta0": 1.0, "turns": 1}},
                    "sweep": {{"t_values": {sweep}}}
                }}"#
            ),
        );
        let out =
            run(&["converge", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "sweep {sweep} should be refused");
    }
}

#[test]
fn converge_fits_first_order_decay() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.json",
        r#"{
            "params": {"omega_c": 2.7, "omega": 1.0, "a": 1.0, "t_total": 100.0},
            "path": {"kind": "latitude", "theta0": 1.0471975511965976, "turns": 1},
            "sweep": {"t_values": [200.0, 50.0, 100.0]}
        }"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run(&["converge", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("sweep.json")).unwrap();
    let s: serde_json::Value = serde_json::from_str(&text).unwrap();
    let entries = s["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    // Entries are sorted by duration even though the config is not.
    let ts: Vec<f64> = entries.iter().map(|e| e["t_total"].as_f64().unwrap()).collect();
    assert_eq!(ts, vec![50.0, 100.0, 200.0]);
    let order = s["map_error_order"].as_f64().unwrap();
    assert!((0.7..=1.3).contains(&order), "map error order {order}");
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.json", &latitude_config(50.0));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = run(&["evolve", "--config", &cfg, "--out", dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["summary.json", "trajectory.csv"] {
        let fa = std::fs::read(a.join(name)).unwrap();
        let fb = std::fs::read(b.join(name)).unwrap();
        assert_eq!(fa, fb, "{name} differs between identical runs");
    }
}
