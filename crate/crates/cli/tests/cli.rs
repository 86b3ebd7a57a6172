use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinoptics"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const FLAT: &str = r#"{
  "schema_version": 1,
  "medium": {"profile": {"kind": "constant", "n": 1.0}, "domain": {"min": [-1, -1, -1], "max": [1, 1, 1]}},
  "ray": {"x0": [0, 0, 0], "u0": [0, 0, U3], "polarization": {"jones": {"psi_plus": [1, 0], "psi_minus": [0, 0]}}},
  "integrator": {"ds": 0.1, "n_steps": N, "mode": "flat"}
}"#;

fn flat(dir: &Path, u3: &str, n: usize) -> PathBuf {
    write(dir, "flat.json", &FLAT.replace("U3", u3).replace("N", &n.to_string()))
}

#[test]
fn trace_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("flat.json");
    let out = dir.path().join("run");
    let o = run(&["trace", "--scenario", sc.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "s,x1,x2,x3,u1,u2,u3,re_e1,re_e2,re_e3,im_e1,im_e2,im_e3,spin,residual_u,residual_e,residual_ue"
    );
    assert_eq!(lines.count(), 501);
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"passed\": true"));
    assert!(report.contains("\"max_spin_drift\": 0.0"));
    assert!(report.contains("path_length_over_lambdabar"));
}

#[test]
fn trace_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("fish_eye.json");
    let mut csvs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let o = run(&["trace", "--scenario", sc.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        csvs.push(std::fs::read(out.join("trajectory.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn trace_domain_exit_reports_step() {
    let dir = tempfile::tempdir().unwrap();
    let sc = flat(dir.path(), "1", 50);
    let o = run(&["trace", "--scenario", sc.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    // step 10 lands on the face, the first stage of step 11 leaves the box
    assert!(err.contains("step 11") && err.contains("outside the domain"), "{err}");
}

#[test]
fn invalid_scenario_names_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let sc = flat(dir.path(), "2", 5);
    let o = run(&["trace", "--scenario", sc.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unit direction |u0| = 1"), "{}", stderr(&o));

    let bad = write(dir.path(), "bad.json", "{\n  \"schema_version\": 1,\n  oops\n}");
    let o = run(&["check", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn tolerance_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let sc = flat(dir.path(), "1.0000000001", 5);
    let args = ["trace", "--scenario", sc.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()];
    assert!(run(&args).status.success());
    let o = bin().args(args).env("SPINOPTICS_TOL", "1e-12").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

fn sweep(name: &str, lo: &str, hi: &str, steps: &str) -> (Output, Vec<Vec<String>>) {
    let sc = scenario(name);
    let o = run(&["scatter", "--scenario", sc.to_str().unwrap(), "--theta-min", lo, "--theta-max", hi, "--theta-steps", steps]);
    let rows = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (o, rows)
}

#[test]
fn scatter_sweep_values() {
    let (o, rows) = sweep("interface.json", "0", "45", "4");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("theta1_deg,branch,theta2_deg,s1,s2,shift_over_lambdabar\n"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][5], "0");
    let t1 = std::f64::consts::FRAC_PI_4;
    let t2 = (t1.sin() / 1.5).asin();
    let oracle = (t2.cos() - t1.cos()) / t1.sin();
    let got: f64 = rows[3][5].parse().unwrap();
    assert!((got - oracle).abs() < 1e-12);
    assert_eq!(rows[3][1], "Refracted");
}

#[test]
fn scatter_crosses_critical_angle() {
    let (o, rows) = sweep("dense_to_rare.json", "30", "60", "301");
    assert!(o.status.success(), "{}", stderr(&o));
    let crit = (1.0f64 / 1.5).asin().to_degrees();
    for r in &rows {
        let t: f64 = r[0].parse().unwrap();
        let want = if t < crit { "Refracted" } else { "TotalInternalReflection" };
        assert_eq!(r[1], want, "theta {t}");
    }
}

#[test]
fn scatter_row_errors_recorded() {
    let (o, rows) = sweep("interface.json", "80", "90", "3");
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2][1], "Error");
    assert!(stderr(&o).contains("grazing"));
}

#[test]
fn scatter_writes_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("interface.json");
    let mut outs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("s{k}"));
        let o = run(&["scatter", "--scenario", sc.to_str().unwrap(), "--theta-steps", "200", "--out-dir", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        outs.push(std::fs::read(out.join("sweep.csv")).unwrap());
        let json = std::fs::read_to_string(out.join("sweep.json")).unwrap();
        assert!(json.contains("\"shift_norm\"") && json.contains("\"lambdabar\""));
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn holonomy_latitude_and_files() {
    let phase_of = |text: &str| -> f64 {
        text.lines()
            .find_map(|l| l.trim().strip_prefix("\"phase\": "))
            .map(|v| v.trim_end_matches(',').parse().unwrap())
            .unwrap()
    };
    // colatitude 60 encloses solid angle pi
    let o = run(&["holonomy", "--kind", "berry", "--latitude-deg", "60"]);
    assert!(o.status.success());
    let phase = phase_of(&stdout(&o));
    assert!((phase.abs() - std::f64::consts::PI).abs() < 1e-6, "{phase}");

    let dir = tempfile::tempdir().unwrap();
    // closed octant triangle of circular and linear states: phase of magnitude pi/4
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let tri = format!("[[[1,0],[0,0]], [[{h},0],[{h},0]], [[{h},0],[0,{h}]], [[1,0],[0,0]]]");
    let p = write(dir.path(), "tri.json", &tri);
    let o = run(&["holonomy", "--kind", "pancharatnam", "--loop", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let phase = phase_of(&stdout(&o));
    assert!((phase.abs() - std::f64::consts::FRAC_PI_4).abs() < 1e-12, "{phase}");

    let bad = write(dir.path(), "bad.json", "[[[1,0],[0,0],[0,0]], [[0,0],[1,0],[0,0]]]");
    let o = run(&["holonomy", "--kind", "berry", "--loop", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["holonomy", "--kind", "pancharatnam", "--latitude-deg", "30"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_bundled_scenarios() {
    for name in ["flat.json", "linear_gradient.json", "fish_eye.json", "interface.json", "dense_to_rare.json"] {
        let sc = scenario(name);
        let o = run(&["check", "--scenario", sc.to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(!stderr(&o).contains("FAIL"));
        assert!(stdout(&o).contains("\"checks\""));
    }
}

#[test]
fn check_flags_violation() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(scenario("linear_gradient.json"))
        .unwrap()
        .replace("\"seed\": 1", "\"seed\": 1, \"thresholds\": {\"color_drift\": 1e-30, \"spin_drift\": 1e-30}")
        .replace("\"n_steps\": 10000", "\"n_steps\": 100");
    let sc = write(dir.path(), "tight.json", &body);
    let o = run(&["check", "--scenario", sc.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("FAIL"));
    let o = run(&["trace", "--scenario", sc.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
