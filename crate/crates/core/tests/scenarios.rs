use nonholo::finsler::homogeneity_check;
use nonholo::scenario::{catalog_names, load_scenario, parse_scenario, ScenarioKind};
use nonholo::suite::{run_suite, RunOptions, Suite};
use nonholo::Error;

fn opts(seed: u64, points: usize) -> RunOptions {
    RunOptions {
        seed,
        points,
        tol_scale: 1.0,
    }
}

#[test]
fn randers_scenario_file_on_eight_dimensions() {
    let dir = std::env::temp_dir().join(format!("nonholo-scn-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("randers44.json");
    std::fs::write(
        &path,
        r#"{
  "name": "randers44",
  "kind": "finsler",
  "n": 4,
  "m": 4,
  "signature": [1, 1, 1, -1, 1, 1, 1, -1],
  "F": "sqrt(u5^2+u6^2+u7^2-u8^2) + 0.3*u5",
  "domain": [[-1, 1], [-1, 1], [-1, 1], [-1, 1], [0.5, 2], [0.5, 2], [0.5, 2], [0, 0.3]]
}"#,
    )
    .unwrap();
    let s = parse_scenario(&path).unwrap();
    std::fs::remove_dir_all(&dir).ok();
    assert_eq!(s.kind, ScenarioKind::Finsler);
    assert_eq!((s.chart.n, s.chart.m), (4, 4));
    let ff = s.finsler.clone().unwrap();
    for p in s.sample_points(5, 20) {
        assert!(homogeneity_check(&ff, &p, &[0.5, 2.0, 3.0]).unwrap().max() < 1e-9);
    }
}

#[test]
fn minkowski_all_suites_pass_tightly() {
    let s = load_scenario("minkowski22").unwrap();
    let r = run_suite(&s, Suite::All, &opts(42, 100)).unwrap();
    assert!(r.all_pass());
    for c in &r.checks {
        assert!(c.residual < 1e-10, "{} = {:e}", c.id, c.residual);
    }
}

#[test]
fn schwarzschild_vacuum_with_levi_civita() {
    let s = load_scenario("schwarzschild22").unwrap();
    let r = run_suite(&s, Suite::Connections, &opts(1, 100)).unwrap();
    let c = r.checks.iter().find(|c| c.id == "connections.vacuum_einstein.levi_civita").unwrap();
    assert!(c.pass && c.residual < 1e-7);
    assert_eq!(c.points, 100);
}

#[test]
fn every_catalog_scenario_passes_its_suites() {
    for name in catalog_names() {
        let s = load_scenario(name).unwrap();
        let r = run_suite(&s, Suite::All, &opts(3, 6)).unwrap();
        let bad: Vec<_> = r.checks.iter().filter(|c| !c.pass).map(|c| (&c.id, c.residual)).collect();
        assert!(bad.is_empty(), "{name}: {bad:?}");
    }
}

#[test]
fn reports_are_deterministic() {
    let s = load_scenario("conformally_flat_nonholonomic").unwrap();
    let strip = |mut r: nonholo::suite::Report| {
        r.checks.iter_mut().for_each(|c| c.ms = 0.0);
        r.to_json()
    };
    let a = strip(run_suite(&s, Suite::All, &opts(9, 4)).unwrap());
    let b = strip(run_suite(&s, Suite::All, &opts(9, 4)).unwrap());
    assert_eq!(a, b);
}

#[test]
fn euclidean_scenario_has_no_spinor_suites() {
    let s = load_scenario("randers_flat").unwrap();
    for suite in [Suite::Spin, Suite::Twistor] {
        assert!(matches!(run_suite(&s, suite, &opts(1, 2)), Err(Error::SuiteInapplicable(_))));
    }
}
