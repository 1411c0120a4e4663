use std::path::Path;
use std::process::Command;

fn kdecay(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_kdecay")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn rates_pass_and_write_results() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = kdecay(&["rates", "--preset", "desk", "--out", p(dir.path())]);
    assert_eq!(code, 0, "{stdout}");
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(result["status"], "pass");
    assert_eq!(result["config"]["tolerances"]["conv_factor"], 3.0);
    assert!(dir.path().join("series/conv_2_3.csv").exists());
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"rho": 1.0, "colour": "blue"}"#).unwrap();
    let (code, _, stderr) = kdecay(&["rates", "--config", p(&cfg), "--preset", "desk"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("colour"), "{stderr}");
}

#[test]
fn failing_check_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    // a bootstrap index outside the admissible range is rejected up front
    std::fs::write(&cfg, r#"{"bootstrap_rhos": [1.2]}"#).unwrap();
    let (code, _, _) = kdecay(&["rates", "--config", p(&cfg), "--preset", "desk"]);
    assert_eq!(code, 1);
    std::fs::write(&cfg, r#"{"tolerances": {"conv_factor": 1.0}}"#).unwrap();
    let (code, stdout, _) = kdecay(&["rates", "--config", p(&cfg), "--preset", "desk"]);
    assert_eq!(code, 1);
    assert!(stdout.contains("FAIL conv_2_3"), "{stdout}");
}

#[test]
fn export_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let op = dir.path().join("op.json");
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"grid": {"n": 2, "points_per_axis": 6, "hermite_scaling": 1.0}}"#).unwrap();
    let (code, _, stderr) = kdecay(&["export-operator", "--config", p(&cfg), "--preset", "desk", "--out", p(&op)]);
    assert_eq!(code, 0, "{stderr}");
    std::fs::write(
        &cfg,
        format!(r#"{{"grid": {{"n": 2, "points_per_axis": 6, "hermite_scaling": 1.0}}, "operator": {:?}}}"#, p(&op)),
    )
    .unwrap();
    let (code, stdout, stderr) = kdecay(&["validate", "--config", p(&cfg), "--preset", "desk"]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert!(stdout.contains("PASS lambda"));
}
