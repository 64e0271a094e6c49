use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phi-sasaki"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn scenario(name: &str) -> String {
    scenarios().join(name).to_str().unwrap().to_string()
}

#[test]
fn check_passes_on_catalog_structures() {
    let out = TempDir::new().unwrap();
    let o = run(&["check", "--scenario", &scenario("exp2d_natural_lift.json"), "--out", out.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("check.json")).unwrap()).unwrap();
    let checks: Vec<&str> = report.as_array().unwrap().iter().map(|r| r["check"].as_str().unwrap()).collect();
    for name in ["norden", "parallel_phi", "curvature_purity"] {
        assert!(checks.contains(&name), "{checks:?}");
    }
}

#[test]
fn flat_parallel_phi_residual_is_exactly_zero() {
    let out = TempDir::new().unwrap();
    let o = run(&["check", "--scenario", &scenario("flat_diag_planar.json"), "--out", out.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("check.json")).unwrap()).unwrap();
    let parallel = report.as_array().unwrap().iter().find(|r| r["check"] == "parallel_phi").unwrap();
    assert_eq!(parallel["max_residual"].as_f64(), Some(0.0));
}

#[test]
fn check_names_the_failed_axiom() {
    let o = run(&["check", "--scenario", &scenario("random_phi.json")]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("norden") && l.contains("FAIL")), "{stdout}");
}

#[test]
fn integrate_writes_the_documented_columns() {
    let out = TempDir::new().unwrap();
    let dir = out.path().to_str().unwrap();
    let o = run(&[
        "integrate",
        "--scenario",
        &scenario("oblique.json"),
        "--out",
        dir,
        "--tspan",
        "0,0.5",
        "--step",
        "0.01",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let traj = fs::read_to_string(out.path().join("trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,x1,x2,x3,x4,xdot1,xdot2,xdot3,xdot4,xi1,xi2,xi3,xi4,xidot1,xidot2,xidot3,xidot4"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 51);
    let last_t: f64 = rows.last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert_eq!(last_t, 0.5);
    // Oblique closed form: x1 = 0.1 + 0.6 √(3/4) t.
    let x1: f64 = rows.last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((x1 - (0.1 + 0.6 * 0.75f64.sqrt() * 0.5)).abs() < 1e-10);
    let monitors = fs::read_to_string(out.path().join("monitors.csv")).unwrap();
    assert_eq!(monitors.lines().next().unwrap(), "t,unit_norm,rho_sq,speed_sq");
}

#[test]
fn csv_output_is_bit_identical_across_runs() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        let o = run(&[
            "integrate",
            "--scenario",
            &scenario("exp2d_natural_lift.json"),
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
    }
    for f in ["trajectory.csv", "monitors.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_length_span_gives_header_only_csv() {
    let out = TempDir::new().unwrap();
    let o = run(&[
        "integrate",
        "--scenario",
        &scenario("oblique.json"),
        "--out",
        out.path().to_str().unwrap(),
        "--tspan",
        "0.25,0.25",
    ]);
    assert_eq!(code(&o), 0);
    for f in ["trajectory.csv", "monitors.csv"] {
        let text = fs::read_to_string(out.path().join(f)).unwrap();
        assert_eq!(text.lines().count(), 1, "{f}: {text}");
    }
}

#[test]
fn blow_up_leaves_partial_output_and_exits_one() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "blow.json",
        r#"{
            "manifold": {"dim": 2, "g": [["1", "0"], ["0", "1"]], "phi": [["1", "0"], ["0", "-1"]]},
            "system": "f_planar_tm",
            "F": "phi",
            "coefficients": {"rho1": "1/(t-1)", "rho2": "0"},
            "initial": {"x": [0, 0], "xdot": [1, 0], "xi": [1, 0], "xidot": [0, 0]},
            "integrator": {"step": 0.01, "t_span": [0, 2]}
        }"#,
    );
    let out = dir.path().join("out");
    let o = run(&["integrate", "--scenario", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let rows = fs::read_to_string(out.join("trajectory.csv")).unwrap().lines().count();
    assert!(rows > 50 && rows < 201, "{rows} rows");
}

#[test]
fn frenet_reports_constant_curvatures() {
    let out = TempDir::new().unwrap();
    let o = run(&["frenet", "--scenario", &scenario("const_curv_helix.json"), "--out", out.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.path().join("frenet.csv")).unwrap();
    assert!(csv.starts_with("s,k1,k2"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("frenet.json")).unwrap()).unwrap();
    let constant = summary["constant"].as_array().unwrap();
    assert!(constant.iter().take(2).all(|v| v.as_bool() == Some(true)));
    // b²c² = (1 − ρ²)(k₁² + k₂²) with b = ρ = 1/2, c = 1.
    let k: Vec<f64> = summary["mean_curvatures"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((0.25 - 0.75 * (k[0] * k[0] + k[1] * k[1])).abs() < 1e-6);
}

#[test]
fn frenet_rejects_vertical_curves() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "vertical.json",
        r#"{
            "manifold": "euclid_oblique",
            "system": "geodesic_unit",
            "initial": {"x": [0, 0, 0, 0], "xdot": [0, 0, 0, 0], "xi": [1, 0, 0, 0], "xidot": [0, 1, 0, 0]},
            "integrator": {"step": 0.01, "t_span": [0, 1]}
        }"#,
    );
    let o = run(&["frenet", "--scenario", &path, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("vertical"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_single_claim_and_json_report() {
    let out = TempDir::new().unwrap();
    let o = run(&["verify", "7", "--out", out.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("verify.json")).unwrap()).unwrap();
    assert!(report.as_array().unwrap().iter().all(|c| c["id"] == "7" && c["passed"] == true));
}

#[test]
fn verify_scenario_claims() {
    let o = run(&["verify", "--scenario", &scenario("oblique.json")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let mutated = run(&["verify", "--scenario", &scenario("oblique.json"), "--mutation"]);
    assert_eq!(code(&mutated), 1);
}

#[test]
fn configuration_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("unknown_entry.json", r#"{"manifold": "sphere"}"#),
        ("bad_json.json", r#"{"manifold": "#),
        ("bad_system.json", r#"{"manifold": "exp2d", "system": "warp"}"#),
        (
            "bad_expr.json",
            r#"{"manifold": {"dim": 2, "g": [["1", "0"], ["0", "1 +"]], "phi": [["1", "0"], ["0", "-1"]]}}"#,
        ),
        ("unknown_field.json", r#"{"manifold": "exp2d", "colour": "blue"}"#),
        ("bad_family.json", r#"{"manifold": "exp2d", "initial": {"family": "nope"}}"#),
    ];
    for (name, body) in cases {
        let path = write(&dir, name, body);
        let o = run(&["check", "--scenario", &path]);
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&run(&["verify", "nope"])), 2);
    assert_eq!(code(&run(&["check"])), 2);
    assert_eq!(code(&run(&["check", "--scenario", "/nonexistent.json"])), 2);
    let path = write(&dir, "no_initial.json", r#"{"manifold": "exp2d", "system": "geodesic_tm"}"#);
    assert_eq!(code(&run(&["integrate", "--scenario", &path])), 2);
    assert_eq!(code(&run(&["integrate", "--scenario", &scenario("oblique.json"), "--step", "-1"])), 2);
}
