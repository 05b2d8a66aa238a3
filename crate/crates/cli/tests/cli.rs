use std::path::Path;
use std::process::{Command, Output};

use subsemi::expmap::LeadingOrderJacobian;
use subsemi::{DiffeoScanRow, ModelId, Point};
use tempfile::TempDir;

fn subsemi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subsemi")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn shoot_heisenberg_keeps_h_constant() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("traj.csv");
    let out = subsemi(&["shoot", "--model", "heisenberg-lorentz", "--xi", "1,0,0", "--t-end", "1", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = read_csv(&csv);
    assert_eq!(header, ["t", "x1", "x2", "x3", "xi1", "xi2", "xi3", "H"]);
    assert_eq!(rows.len(), 1001);
    for r in &rows {
        assert!((r[7] + 0.5).abs() <= 1e-9);
    }
    let log = stderr(&out);
    assert!(log.contains("H0 = -5.0000000000000000e-1"));
    assert!(log.contains("causal class = timelike"));
    assert!(log.contains("natural parameter = "));
    assert!(log.contains("energy = "));
    assert!(log.contains("convergence ratio = "));
}

#[test]
fn shoot_annihilator_stays_at_start() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("traj.csv");
    // ω = dz + ½(x dy - y dx) at (0.4, -0.2, 1)
    let out = subsemi(&[
        "shoot", "--model", "heisenberg-lorentz", "--x0", "0.4,-0.2,1", "--xi", "0.1,0.2,1", "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (_, rows) = read_csv(&csv);
    for r in &rows {
        assert_eq!(&r[1..4], &[0.4, -0.2, 1.0]);
    }
    assert!(stderr(&out).contains("causal class = annihilator"));
}

#[test]
fn shoot_reports_convergence_on_coarse_steps() {
    let out = subsemi(&["shoot", "--model", "quaternion-h-type", "--xi", "0.3,-0.5,0.2,0.4,0.6,0.5,-0.7", "--step", "0.05"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let log = stderr(&out);
    let ratio: f64 = log
        .lines()
        .find_map(|l| l.strip_prefix("convergence ratio = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((ratio - 16.0).abs() <= 0.2 * 16.0, "{ratio}");
}

#[test]
fn shoot_writes_christoffel_dump() {
    let dir = TempDir::new().unwrap();
    let gamma = dir.path().join("gamma.json");
    let out = subsemi(&[
        "shoot", "--model", "heisenberg-lorentz", "--xi", "1,0,0", "--out", dir.path().join("t.csv").to_str().unwrap(),
        "--christoffel-out", gamma.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let nested: Vec<Vec<Vec<f64>>> = serde_json::from_str(&std::fs::read_to_string(gamma).unwrap()).unwrap();
    assert_eq!(nested.len(), 3);
    assert!(nested.iter().all(|m| m.len() == 3 && m.iter().all(|r| r.len() == 3)));
}

#[test]
fn field_file_with_model_id_matches_model_flag() {
    let dir = TempDir::new().unwrap();
    let def = dir.path().join("field.json");
    std::fs::write(&def, r#"{"model": "heisenberg-lorentz"}"#).unwrap();
    let a = subsemi(&["shoot", "--field-file", def.to_str().unwrap(), "--xi", "0.3,1,0.2"]);
    let b = subsemi(&["shoot", "--model", "heisenberg-lorentz", "--xi", "0.3,1,0.2"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn shoot_config_errors_exit_1() {
    assert_eq!(code(&subsemi(&["shoot", "--model", "heisenberg-lorentz", "--xi", "1,0"])), 1);
    assert_eq!(code(&subsemi(&["shoot", "--model", "nope", "--xi", "1,0,0"])), 1);
    assert_eq!(code(&subsemi(&["shoot", "--xi", "1,0,0"])), 1);
    assert_eq!(code(&subsemi(&["shoot", "--model", "heisenberg-lorentz", "--xi", "1,0,0", "--step", "0"])), 1);
    assert_eq!(code(&subsemi(&["shoot", "--model", "heisenberg-lorentz", "--xi", "a,b,c"])), 1);
    assert_eq!(code(&subsemi(&["shoot", "--field-file", "/nonexistent.json", "--xi", "1,0,0"])), 1);
    assert_eq!(code(&subsemi(&["frobnicate"])), 1);
}

#[test]
fn shoot_blow_up_exits_2() {
    let dir = TempDir::new().unwrap();
    let def = dir.path().join("field.json");
    std::fs::write(&def, r#"{"model": "heisenberg-lorentz"}"#).unwrap();
    // straight line, integrated exactly, so no drift before |x| passes the cutoff
    let out = subsemi(&["shoot", "--field-file", def.to_str().unwrap(), "--xi", "1,0,0", "--t-end", "1e13", "--step", "1e9"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn shoot_drift_exits_3() {
    let out = subsemi(&["shoot", "--model", "heisenberg-lorentz", "--xi", "1,0.2,8", "--step", "0.25"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn expscan_heisenberg_flags_null_directions() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("scan.json");
    let out = subsemi(&["expscan", "--model", "heisenberg-lorentz", "--resolution", "100", "--out", json.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows: Vec<DiffeoScanRow> = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(rows.len(), 100);
    for (i, r) in rows.iter().enumerate() {
        let null = (r.u[0].abs() - r.u[1].abs()).abs() < 1e-12;
        assert_eq!(null, i % 25 == 0);
        assert_eq!(r.local_diffeo, !null, "row {i}");
    }
    let log = stderr(&out);
    let fraction: f64 = log
        .split("local diffeomorphism on ")
        .nth(1)
        .and_then(|t| t.split(' ').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((fraction - 0.96).abs() < 1e-12, "{log}");
    assert!(log.contains("of 100 directions"));
    assert!(log.contains("delta_hat = "));
}

#[test]
fn expscan_quaternion_det_is_homogeneous_of_degree_six() {
    let out = subsemi(&["expscan", "--model", "quaternion-h-type", "--resolution", "12"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows: Vec<DiffeoScanRow> = serde_json::from_slice(&out.stdout).unwrap();
    let lead = LeadingOrderJacobian::at(ModelId::QuaternionHType.field(), &Point::zeros(7)).unwrap();
    for r in &rows {
        assert!((lead.evaluate(&r.u).det - r.det_w).abs() <= 1e-12 * r.det_w.abs() + 1e-15);
        for s in [0.5, 2.0, 3.0] {
            let scaled: Vec<f64> = r.u.iter().map(|v| v * s).collect();
            let d = lead.evaluate(&scaled).det;
            assert!((d - s.powi(6) * r.det_w).abs() <= 1e-8 * d.abs() + 1e-12 * s.powi(6));
        }
    }
}

#[test]
fn expscan_rejects_zero_resolution() {
    assert_eq!(code(&subsemi(&["expscan", "--model", "heisenberg-lorentz", "--resolution", "0"])), 1);
}

#[test]
fn outputs_are_deterministic() {
    let a = subsemi(&["expscan", "--model", "quaternion-h-type", "--resolution", "16", "--seed", "7"]);
    let b = subsemi(&["expscan", "--model", "quaternion-h-type", "--resolution", "16", "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
    let c = subsemi(&["verify", "--suite", "models", "--seed", "9"]);
    let d = subsemi(&["verify", "--suite", "models", "--seed", "9"]);
    assert_eq!(c.stdout, d.stdout);
}

#[test]
fn verify_models_passes_with_closed_form_check() {
    let out = subsemi(&["verify", "--suite", "models"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    let line = text.lines().find(|l| l.contains("closed form vs integrator")).unwrap();
    assert!(line.starts_with("PASS") && line.contains("<= 1e-6"), "{line}");
}

#[test]
fn verify_christoffel_reports_bracket_identity() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("report.json");
    let out = subsemi(&["verify", "--suite", "christoffel", "--model", "heisenberg-lorentz", "--out", report.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let line = stdout(&out).lines().find(|l| l.contains("bracket identity")).unwrap().to_string();
    assert!(line.starts_with("PASS") && line.contains("<= 1e-9"), "{line}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert!(json["results"].as_array().unwrap().iter().all(|r| r["passed"] == true));
}

#[test]
fn verify_custom_field_runs_generic_suites() {
    let dir = TempDir::new().unwrap();
    let def = dir.path().join("field.json");
    std::fs::write(
        &def,
        r#"{"dim": 3, "rank": 2, "index": 1, "entries": [
            {"j": 1, "k": 1, "expr": "-1"}, {"j": 1, "k": 3, "expr": "-0.5*x2"},
            {"j": 2, "k": 2, "expr": "1"}, {"j": 2, "k": 3, "expr": "-0.5*x1"},
            {"j": 3, "k": 3, "expr": "0.25*(x1*x1 - x2*x2)"}]}"#,
    )
    .unwrap();
    let out = subsemi(&["verify", "--suite", "christoffel", "--field-file", def.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains(def.to_str().unwrap()));
}

#[test]
fn verify_failure_exits_4() {
    let dir = TempDir::new().unwrap();
    let def = dir.path().join("flat.json");
    // a constant cometric never bracket-generates
    std::fs::write(&def, r#"{"dim": 3, "rank": 2, "index": 1, "entries": [{"j": 1, "k": 1, "expr": "-1"}, {"j": 2, "k": 2, "expr": "1"}]}"#)
        .unwrap();
    let out = subsemi(&["verify", "--suite", "christoffel", "--field-file", def.to_str().unwrap()]);
    assert_eq!(code(&out), 4, "{}", stdout(&out));
    assert!(stdout(&out).lines().any(|l| l.starts_with("FAIL") && l.contains("generator test")));
}

#[test]
fn verify_unknown_suite_exits_1() {
    assert_eq!(code(&subsemi(&["verify", "--suite", "bogus"])), 1);
}
