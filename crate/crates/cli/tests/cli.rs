use std::process::{Command, Output};

fn nonholo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonholo"))
        .args(args)
        .env_remove("NONHOLO_TOL_SCALE")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn list_names_the_catalog() {
    let out = nonholo(&["list"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "minkowski22",
        "schwarzschild22",
        "randers_flat",
        "quadratic_schwarzschild44",
        "conformally_flat_nonholonomic",
    ] {
        assert!(text.contains(name), "{name} missing from list");
    }
}

#[test]
fn frames_suite_passes_with_json_schema() {
    let out = nonholo(&[
        "run",
        "--scenario",
        "minkowski22",
        "--suite",
        "frames",
        "--points",
        "5",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["scenario"], "minkowski22");
    let checks = v["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    for c in checks {
        for key in ["id", "anchor", "residual", "tol", "pass", "points", "ms"] {
            assert!(c.get(key).is_some(), "missing {key}");
        }
        assert_eq!(c["pass"], true);
        assert!(c.get("error").is_none());
    }
}

#[test]
fn report_is_deterministic_modulo_timing() {
    let args = [
        "run",
        "--scenario",
        "schwarzschild22",
        "--suite",
        "connections",
        "--seed",
        "1",
        "--points",
        "4",
        "--format",
        "json",
    ];
    let strip = |mut v: serde_json::Value| {
        for c in v["checks"].as_array_mut().unwrap() {
            c.as_object_mut().unwrap().remove("ms");
        }
        v
    };
    assert_eq!(strip(json(&nonholo(&args))), strip(json(&nonholo(&args))));
}

#[test]
fn tiny_tolerance_scale_fails_with_exit_one() {
    let out = Command::new(env!("CARGO_BIN_EXE_nonholo"))
        .args([
            "run",
            "--scenario",
            "schwarzschild22",
            "--suite",
            "frames",
            "--points",
            "3",
            "--format",
            "json",
        ])
        .env("NONHOLO_TOL_SCALE", "1e-30")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert!(v["checks"].as_array().unwrap().iter().any(|c| c["pass"] == false));
}

#[test]
fn bad_tolerance_scale_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_nonholo"))
        .args(["run", "--scenario", "minkowski22", "--suite", "frames"])
        .env("NONHOLO_TOL_SCALE", "abc")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inapplicable_suite_exits_two() {
    let out = nonholo(&["run", "--scenario", "randers_flat", "--suite", "spin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not applicable"));
}

#[test]
fn unknown_scenario_and_bad_flags_exit_two() {
    assert_eq!(nonholo(&["run", "--scenario", "no_such_scenario"]).status.code(), Some(2));
    assert_eq!(
        nonholo(&["run", "--scenario", "minkowski22", "--suite", "everything"]).status.code(),
        Some(2)
    );
    assert_eq!(nonholo(&["run", "--scenario", "minkowski22", "--points", "0"]).status.code(), Some(2));
    assert_eq!(nonholo(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn malformed_scenario_file_reports_position() {
    let dir = std::env::temp_dir().join(format!("nonholo-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("broken.json");
    std::fs::write(&path, "{\n  \"name\": \"broken\",\n  \"kind\": \n}").unwrap();
    let out = nonholo(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn out_flag_writes_file() {
    let dir = std::env::temp_dir().join(format!("nonholo-out-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("report.txt");
    let out = nonholo(&[
        "run",
        "--scenario",
        "minkowski22",
        "--suite",
        "frames",
        "--points",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("scenario: minkowski22"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn crosscheck_passes_on_catalog() {
    for name in ["schwarzschild22", "randers_flat"] {
        let out = nonholo(&["crosscheck", "--scenario", name, "--points", "4", "--format", "json"]);
        assert_eq!(out.status.code(), Some(0), "{name}");
        assert!(json(&out)["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    }
}
