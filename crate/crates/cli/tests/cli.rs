//! End-to-end tests of the binary: exit codes, file contracts, and
//! determinism.

use std::path::Path;
use std::process::Command;

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ksnbody"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Figure-eight choreography at spatial scale 0.7 (bounded, no close
/// encounters over the covered span).
fn bounded_config(s_end: f64, mode: &str) -> String {
    let l: f64 = 0.7;
    let q = [0.97000436 * l, -0.24308753 * l, 0.0];
    let v3 = [-0.93240737 / l.sqrt(), -0.86473146 / l.sqrt(), 0.0];
    format!(
        r#"{{
  "masses": [1.0, 1.0, 1.0],
  "bodies": {{
    "positions": [[{}, {}, 0.0], [{}, {}, 0.0], [0.0, 0.0, 0.0]],
    "velocities": [[{}, {}, 0.0], [{}, {}, 0.0], [{}, {}, 0.0]]
  }},
  "h": "auto",
  "integrator": {{"method": "rk4", "ds": 0.001, "s_end": {s_end}}},
  "mode": "{mode}",
  "seed": 42
}}"#,
        q[0],
        q[1],
        -q[0],
        -q[1],
        -v3[0] / 2.0,
        -v3[1] / 2.0,
        -v3[0] / 2.0,
        -v3[1] / 2.0,
        v3[0],
        v3[1],
    )
}

fn read_summary(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("summary.json")).expect("summary exists");
    serde_json::from_str(&text).expect("summary is valid JSON")
}

#[test]
fn simulate_both_mode_agrees_across_representations() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, bounded_config(2.0, "both")).unwrap();
    let out = dir.path().join("out");
    let (code, _, stderr) = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");

    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("s,t,alpha11,alpha12,alpha13,alpha22,alpha23,alpha33,beta11"));
    assert!(header.contains("gamma11"));
    assert!(header.contains(",a12,a13,a23,b12,b13,b23,c11"));
    assert!(header.ends_with("cas6_re,cas6_im"));
    assert_eq!(header.split(',').count(), 2 + 36 + 12);
    assert_eq!(lines.count(), 2001);

    let summary = read_summary(&out);
    let dev = summary["representation_deviation"].as_f64().unwrap();
    assert!(dev <= 1e-6, "representation deviation {dev}");
    assert!(summary["drift"]["h_reg"]["abs"].as_f64().unwrap() <= 1e-8);
    assert!(summary["error"].is_null());
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, bounded_config(0.5, "canonical")).unwrap();
    let (code_a, _, _) = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("a").to_str().unwrap(),
    ]);
    let (code_b, _, _) = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("b").to_str().unwrap(),
    ]);
    assert_eq!((code_a, code_b), (0, 0));
    let a = std::fs::read(dir.path().join("a/trajectory.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/trajectory.csv")).unwrap();
    assert_eq!(a, b, "identical config and seed must give identical bytes");
}

#[test]
fn simulate_near_collision_completes() {
    // Binary encounter with periapsis separation 5e-5 plus a distant third
    // body; the regularised flow must sail through.
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    let a: f64 = 0.5;
    let ecc = 1.0 - 1e-4;
    let r_apo = a * (1.0 + ecc);
    let v_rel = (2.0 * (2.0 / r_apo - 1.0 / a)).sqrt();
    std::fs::write(
        &config,
        format!(
            r#"{{
  "masses": [1.0, 1.0, 1.0],
  "bodies": {{
    "positions": [[{}, 0.0, 0.0], [{}, 0.0, 0.0], [0.0, 5.0, 0.0]],
    "velocities": [[0.0, {}, 0.0], [0.0, {}, 0.0], [0.3, 0.0, 0.1]]
  }},
  "integrator": {{"method": "rk4", "ds": 0.001, "s_end": 0.3}},
  "mode": "canonical"
}}"#,
            r_apo / 2.0,
            -r_apo / 2.0,
            v_rel / 2.0,
            -v_rel / 2.0,
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let (code, _, stderr) = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let summary = read_summary(&out);
    let drift = summary["drift"]["h_reg"]["abs"].as_f64().unwrap();
    assert!(drift <= 1e-6, "energy drift through encounter: {drift}");
    // The smallest alpha33 column value is the pair separation of the
    // binary; it must dip through the encounter scale.
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "alpha33").unwrap();
    let min_sep = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!(min_sep <= 1e-4, "closest separation {min_sep}");
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, "{ not json").unwrap();
    let out = dir.path().join("out");
    let (code, _, stderr) = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("malformed"));
    assert!(!out.exists(), "no output files on invalid config");
}

#[test]
fn coincident_bodies_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{
  "masses": [1.0, 1.0, 1.0],
  "bodies": {
    "positions": [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    "velocities": [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
  },
  "integrator": {"method": "rk4", "ds": 0.001, "s_end": 1.0}
}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let (code, _, stderr) = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3, "stderr: {stderr}");
    let summary = read_summary(&out);
    assert!(summary["error"].as_str().unwrap().contains("collision"));
}

#[test]
fn verify_suite_reports_json() {
    let (code, stdout, _) = run(&[
        "verify", "--suite", "algebra", "--m", "3", "--trials", "25", "--seed", "42",
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["suite"], "algebra");
    let props = report["properties"].as_array().unwrap();
    assert!(props.iter().any(|p| p["name"] == "closure_residual"));
    let closure = props
        .iter()
        .find(|p| p["name"] == "closure_residual")
        .unwrap();
    assert!(closure["worst_residual"].as_f64().unwrap() <= 1e-12);
    assert!(report["worst_residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn verify_rejects_unknown_suite_and_bad_m() {
    let (code, _, _) = run(&["verify", "--suite", "nope"]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["verify", "--suite", "iso", "--m", "4"]);
    assert_eq!(code, 2);
}

#[test]
fn verify_tol_override_can_fail() {
    // An absurdly tight tolerance must flip the suite to failing while
    // still emitting the report.
    let (code, stdout, _) = run(&[
        "verify", "--suite", "ks", "--trials", "10", "--tol", "1e-30",
    ]);
    assert_eq!(code, 1);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["pass"], false);
}

#[test]
fn kepler_command_covers_requested_periods() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(&[
        "kepler",
        "--mu",
        "1.0",
        "--mass-product",
        "1.0",
        "--h",
        "-0.5",
        "--ecc",
        "0.9",
        "--periods",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "s,t,x1,x2,x3,x4,det_l");
    let last = lines.last().unwrap();
    let t_end: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    // a = 1, mu = 1, m1 m2 = 1: one revolution is 2 pi.
    let expected = 3.0 * 2.0 * std::f64::consts::PI;
    assert!(
        (t_end - expected).abs() <= 1e-6 * expected,
        "t span {t_end} vs {expected}"
    );
    // det L column is constant along the flow.
    let dets: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(6).unwrap().parse().unwrap())
        .collect();
    let spread = dets
        .iter()
        .fold(0.0f64, |acc, &d| acc.max((d - dets[0]).abs()));
    assert!(spread <= 1e-10, "det L drift {spread}");
}

#[test]
fn kepler_circular_orbit_has_constant_x1() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(&[
        "kepler",
        "--mu",
        "1.0",
        "--mass-product",
        "1.0",
        "--h",
        "-0.5",
        "--ecc",
        "0.0",
        "--periods",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let x1: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let spread = x1.iter().fold(0.0f64, |acc, &v| acc.max((v - x1[0]).abs()));
    assert!(spread <= 1e-10, "circular orbit X1 drift {spread}");
}

#[test]
fn kepler_command_validates_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(&[
        "kepler",
        "--mu",
        "1.0",
        "--mass-product",
        "1.0",
        "--h",
        "0.5",
        "--ecc",
        "0.5",
        "--periods",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "h >= 0 with periods must be rejected");
    let (code, _, _) = run(&[
        "kepler",
        "--mu",
        "1.0",
        "--mass-product",
        "1.0",
        "--h",
        "-0.5",
        "--ecc",
        "1.5",
        "--periods",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "eccentricity outside [0, 1] must be rejected");
}
