use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, config: Option<&str>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_optexec"));
    cmd.current_dir(dir).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.args(args).output().unwrap()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out").join(name)).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn validate_baseline_succeeds() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), None, &["validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let doc = json(dir.path(), "validity.json");
    assert!(doc["version"].is_string());
    assert!(doc["config"]["model"].is_object());
}

#[test]
fn baseline_solve_matches_reference() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), None, &["solve"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("out/coefficients.csv")).unwrap();
    let mut rows = text.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "a").unwrap();
    let a0: f64 = rows.next().unwrap().split(',').nth(col).unwrap().parse().unwrap();
    assert!((a0 / -1.42277e-5 - 1.0).abs() < 1e-4, "a(0) = {a0}");
}

#[test]
fn inadmissible_alpha_exits_one() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), Some("[penalties]\nalpha = 0.4\n"), &["validate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("alpha"), "{}", stderr(&out));
}

#[test]
fn malformed_config_reports_line() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), Some("[model]\nsigma = 0.1\nbogus = 3\n"), &["validate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn unknown_subcommand_exits_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), None, &["frobnicate"]).status.code(), Some(1));
}

#[test]
fn second_order_breach_exits_two() {
    // affine uncertainty has no closed-form horizon bound, so the breach
    // only shows up while integrating
    let dir = TempDir::new().unwrap();
    let config = "[model]\nm0 = 10.0\nm1 = 1000.0\nT = 1e6\n";
    let out = run(dir.path(), Some(config), &["--grid", "3600", "solve"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("second-order"), "{}", stderr(&out));
}

#[test]
fn unwritable_output_exits_three() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("out");
    fs::write(&blocker, "not a directory").unwrap();
    let out = run(dir.path(), None, &["solve"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn simulation_is_reproducible() {
    // same output directory, so the echoed config matches too
    let dir = TempDir::new().unwrap();
    let outputs: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
        .map(|_| {
            let config = "[model]\np0 = 0.1\n[sim]\nsteps = 360\npaths = 200\nexport_paths = 2\n";
            let out = run(dir.path(), Some(config), &["simulate", "--seed", "42"]);
            assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
            let summary = fs::read(dir.path().join("out/simulate.json")).unwrap();
            let path = fs::read(dir.path().join("out/path_0001.csv")).unwrap();
            fs::remove_dir_all(dir.path().join("out")).unwrap();
            (summary, path)
        })
        .collect();
    assert!(outputs[0] == outputs[1], "outputs differ between identical runs");
}

#[test]
fn expanded_inputs_are_echoed() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), Some("[model]\np0 = 0.1\n"), &["validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let doc = json(dir.path(), "validity.json");
    let model = &doc["config"]["model"];
    let sigma = model["sigma"].as_f64().unwrap();
    let m0 = model["m0"].as_f64().unwrap();
    assert!(m0 > 0.0);
    assert!((doc["config"]["expanded_from"]["p0"].as_f64().unwrap() - 0.1).abs() < 1e-15);
    assert!(sigma > 0.0);
}

fn boundary(config: &str) -> Value {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), Some(config), &["boundary"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    json(dir.path(), "boundary.json")
}

#[test]
fn terminal_target_shrinks_with_beta() {
    let loose = boundary("[model]\np0 = 0.1\n[penalties]\nbeta = 1e-3\n");
    let tight = boundary("[model]\np0 = 0.1\n[penalties]\nbeta = 0.1\n");
    let p_loose = loose["terminal_target"].as_f64().unwrap();
    let p_tight = tight["terminal_target"].as_f64().unwrap();
    assert!(p_tight.abs() < p_loose.abs(), "{p_tight} vs {p_loose}");
}

#[test]
fn correlation_sign_changes_classification() {
    let base = "[run]\nconvention = \"printed\"\n[model]\np0 = 0.1\n";
    let neg = boundary(&format!("{base}rho = -0.2\n"));
    let small = boundary(&format!("{base}rho = -0.0005\n"));
    assert_ne!(neg["monotonicity"], small["monotonicity"]);
}

#[test]
fn boundary_rejects_linear_uncertainty() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), Some("[model]\np1 = 0.1\n"), &["boundary"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}
