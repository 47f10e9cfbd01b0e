use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn pbvp(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_pbvp")).args(args).output().unwrap();
    out.status.code().unwrap()
}

fn solve(cmd: &str, doc: &str, extra: &[&str]) -> (i32, TempDir) {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("problem.json");
    fs::write(&input, doc).unwrap();
    let out = dir.path().join("out");
    let mut args = vec![cmd, "--input", input.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (pbvp(&args), dir)
}

fn report(dir: &TempDir) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap()
}

fn csv(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn assert_files_exist(dir: &TempDir) {
    for f in report(dir)["files"].as_array().unwrap() {
        assert!(dir.path().join("out").join(f.as_str().unwrap()).exists(), "{f}");
    }
}

#[test]
fn trivial_linear_problem() {
    let (code, dir) = solve(
        "solve-linear",
        r#"{"schema_version": "1", "kind": "linear", "operator": {"eigenvalues": [0.5, 2.0]}}"#,
        &["--grid-size", "64"],
    );
    assert_eq!(code, 0);
    let rows = csv(&dir.path().join("out/trajectory.csv"));
    assert_eq!(rows.len(), 65);
    assert!(rows.iter().all(|r| r[1..].iter().all(|v| *v == 0.0)));
    assert_eq!(report(&dir)["solvability"]["classification"], "solvable");
    assert_files_exist(&dir);
}

#[test]
fn resonant_forcing_is_pseudo_only() {
    let doc = r#"{"schema_version": "1", "kind": "linear", "operator": {"eigenvalues": [1.0]},
        "forcing": {"trig": [{"mode": 1, "slot": "x", "cos": 1.0, "omega": 1.0},
                             {"mode": 1, "slot": "y", "sin": -1.0, "omega": 1.0}]}}"#;
    let (code, dir) = solve("solve-linear", doc, &["--series-terms", "50"]);
    assert_eq!(code, 3);
    let r = report(&dir);
    assert_eq!(r["solvability"]["classification"], "pseudo_only");
    let norm = r["solvability"]["obstruction_norm"].as_f64().unwrap();
    assert!((norm - TAU).abs() < 1e-10, "{norm}");
    assert!((r["boundary_equation_residual"].as_f64().unwrap() - TAU).abs() < 1e-10);
    assert!(r["series_check"]["max_abs_difference"].as_f64().unwrap() < 1e-12);
    assert!(dir.path().join("out/trajectory.csv").exists());
    assert_files_exist(&dir);
}

#[test]
fn malformed_input_exits_one() {
    let (code, _) = solve("solve-linear", r#"{"schema_version": "1", "kind": "lin"#, &[]);
    assert_eq!(code, 1);
    let (code, _) = solve(
        "solve-linear",
        r#"{"schema_version": "1", "kind": "linear", "operator": {"eigenvalues": [2.0, 1.0]}}"#,
        &[],
    );
    assert_eq!(code, 1);
    let (code, _) = solve(
        "solve-nonlinear",
        r#"{"schema_version": "1", "kind": "linear", "operator": {"eigenvalues": [1.0]}}"#,
        &[],
    );
    assert_eq!(code, 1);
    assert_eq!(pbvp(&["solve-linear", "--input", "/nonexistent.json", "--out-dir", "/tmp/x"]), 1);
}

const VDP1: &str = r#"{"schema_version": "1", "kind": "vdp", "operator": {"rule": "critical", "n": 1}}"#;

#[test]
fn van_der_pol_converges_near_radius_two() {
    let (code, dir) = solve("solve-nonlinear", VDP1, &["--eps", "0.01"]);
    assert_eq!(code, 0);
    let r = report(&dir);
    let c0 = &r["generating_root"]["c0"]["pairs"][0];
    let radius = c0[0].as_f64().unwrap().hypot(c0[1].as_f64().unwrap());
    assert!((radius - 2.0).abs() < 1e-10, "{radius}");
    assert_eq!(r["generating_root"]["b0_rank"], 1);
    assert!(r["verification"]["boundary_residual"].as_f64().unwrap() < 1e-8);
    let roots = csv(&dir.path().join("out/roots.csv"));
    assert!((roots[0][4] - 2.0).abs() < 1e-10);
    assert_files_exist(&dir);
}

#[test]
fn van_der_pol_from_non_root_does_not_converge() {
    let doc = r#"{"schema_version": "1", "kind": "vdp", "operator": {"rule": "critical", "n": 1},
        "cbar": [[1.0, 0.0]], "skip_newton": true}"#;
    let (code, dir) = solve("solve-nonlinear", doc, &["--eps", "0.01", "--max-iter", "50", "--grid-size", "256"]);
    assert_eq!(code, 4);
    let history = csv(&dir.path().join("out/history.csv"));
    assert_eq!(history.len(), 50);
    assert_eq!(report(&dir)["outcome"], "not_converged");
    assert_files_exist(&dir);
}

#[test]
fn zero_eps_returns_generating_solution() {
    let (code, dir) = solve("solve-nonlinear", VDP1, &["--eps", "0", "--grid-size", "128"]);
    assert_eq!(code, 0);
    let a = fs::read_to_string(dir.path().join("out/solution.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("out/generating.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn polynomial_system_document() {
    // Z = −φ − |φ|²φ on one resonant mode, written out as monomials
    let doc = r#"{"schema_version": "1", "kind": "nonlinear", "operator": {"rule": "k^2", "n": 1},
        "nonlinear": {"polynomial": [
            {"mode": 1, "slot": "x", "coeff": -1.0, "factors": [{"mode": 1, "slot": "x", "power": 1}]},
            {"mode": 1, "slot": "y", "coeff": -1.0, "factors": [{"mode": 1, "slot": "y", "power": 1}]}
        ]},
        "cbar": [[0.3, 0.1]]}"#;
    let (code, dir) = solve("solve-nonlinear", doc, &["--eps", "0.05", "--grid-size", "256"]);
    assert_eq!(code, 0);
    let r = report(&dir);
    assert_eq!(r["generating_root"]["b0_rank"], 2);
    assert!(r["generating_root"]["c0"]["pairs"][0][0].as_f64().unwrap().abs() < 1e-12);
    // linear damping keeps only the zero solution
    let sol = csv(&dir.path().join("out/solution.csv"));
    assert!(sol.iter().all(|row| row[1..].iter().all(|v| v.abs() < 1e-10)));
}

fn torus(n: &str, support: &str) -> (i32, TempDir) {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let code = pbvp(&["vdp-torus", "--n-modes", n, "--support", support, "--out-dir", out.to_str().unwrap()]);
    (code, dir)
}

#[test]
fn torus_radius_column() {
    for (n, support, radius) in [("1", "1", 2.0), ("2", "1,2", 2.0 / 3f64.sqrt()), ("5", "1,2,3,4,5", 2.0 / 3.0)] {
        let (code, dir) = torus(n, support);
        assert_eq!(code, 0, "support {support}");
        let rows = csv(&dir.path().join("out/torus.csv"));
        assert!(!rows.is_empty());
        for r in rows {
            assert!((r[4] - radius).abs() < 1e-10, "{support}: {}", r[4]);
        }
        assert_files_exist(&dir);
    }
}

#[test]
fn torus_rejects_bad_support() {
    assert_eq!(torus("2", "3").0, 1);
}

#[test]
fn outputs_are_deterministic() {
    let doc = r#"{"schema_version": "1", "kind": "linear", "operator": {"eigenvalues": [0.3, 1.0, 2.2]},
        "alpha": [[0.1, 0.0], [0.0, 0.0], [0.2, -0.1]],
        "forcing": {"trig": [{"mode": 3, "slot": "y", "cos": 0.4, "omega": 0.7}]}}"#;
    let (_, a) = solve("solve-linear", doc, &[]);
    let (_, b) = solve("solve-linear", doc, &[]);
    let read = |d: &TempDir, f: &str| fs::read(d.path().join("out").join(f)).unwrap();
    assert_eq!(read(&a, "trajectory.csv"), read(&b, "trajectory.csv"));

    let (_, a) = solve("solve-nonlinear", VDP1, &["--seed", "3", "--grid-size", "256"]);
    let (_, b) = solve("solve-nonlinear", VDP1, &["--seed", "3", "--grid-size", "256"]);
    for f in ["solution.csv", "generating.csv", "history.csv", "roots.csv"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    let (_, a) = torus("3", "1,3");
    let (_, b) = torus("3", "1,3");
    assert_eq!(read(&a, "torus.csv"), read(&b, "torus.csv"));
}
