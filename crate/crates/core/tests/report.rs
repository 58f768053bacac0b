mod common;

use std::path::Path;
use std::process::Command;

use common::schema::{report_schema, Validator};
use morse_core::report::{emit_scenarios, run, Check, Report, RunConfig, RunError, ScenarioSource, Stage, Status};
use morse_core::scenario::{builtin, builtin_names, Scenario};
use serde_json::Value;

fn builtin_config(name: &str) -> RunConfig {
    RunConfig::new(ScenarioSource::Builtin(name.to_string()))
}

fn run_ok(cfg: &RunConfig) -> Report {
    run(cfg).unwrap_or_else(|e| panic!("run failed: {e}"))
}

fn schema_errors(report: &Report) -> Vec<String> {
    let schema = report_schema();
    let value: Value = serde_json::from_str(&report.to_json()).unwrap();
    Validator::new(&schema).errors(&value)
}

/// `X = +grad f` with `f` kept as the Lyapunov function.
fn uphill(name: &str) -> Scenario {
    let mut d = builtin(name).unwrap().data();
    d.name = format!("{name}_uphill");
    d.field = d.field.iter().map(|v| v.iter().map(|x| -x.clone()).collect()).collect();
    d.ground_truth = None;
    Scenario::new(d).unwrap()
}

#[test]
fn full_run_passes_and_matches_schema() {
    let report = run_ok(&builtin_config("circle_cos"));
    assert_eq!(report.outcome.status, Status::Pass, "{:?}", report.outcome.failures);
    assert_eq!(report.exit_code(), 0);
    assert!(report.identities.is_some() && report.detection.is_some() && report.basins.is_some());
    assert_eq!(schema_errors(&report), Vec::<String>::new());
}

#[test]
fn schema_rejects_tampered_reports() {
    let schema = report_schema();
    let v = Validator::new(&schema);
    let cfg = RunConfig { stage: Stage::Critical, ..builtin_config("circle_cos") };
    let good: Value = serde_json::from_str(&run_ok(&cfg).to_json()).unwrap();
    assert!(v.errors(&good).is_empty());

    let mut missing = good.clone();
    missing.as_object_mut().unwrap().remove("outcome");
    assert!(v.errors(&missing).iter().any(|e| e.contains("missing `outcome`")));

    let mut verdict = good.clone();
    verdict["critical"]["verdict"] = Value::from("maybe");
    assert!(!v.errors(&verdict).is_empty());

    let mut extra = good.clone();
    extra["surprise"] = Value::from(1);
    assert!(v.errors(&extra).iter().any(|e| e.contains("unexpected `surprise`")));

    let mut nested = good.clone();
    nested["critical"]["surprise"] = Value::from(1);
    assert!(v.errors(&nested).iter().any(|e| e.contains("$.critical")));

    let mut negative = good;
    negative["config"]["tol_ode"] = Value::from(-1.0);
    assert!(!v.errors(&negative).is_empty());
}

#[test]
fn identical_configs_give_identical_reports() {
    for name in ["circle_cos", "double_well_circle"] {
        let cfg = RunConfig { seed: 7, ..builtin_config(name) };
        let (a, b) = (run_ok(&cfg), run_ok(&cfg));
        assert_eq!(a.to_json_without_timestamp(), b.to_json_without_timestamp(), "{name}");
    }
}

#[test]
fn uphill_field_is_rejected_at_the_lyapunov_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("uphill.json");
    uphill("round_sphere_height").save(&path).unwrap();
    let report = run_ok(&RunConfig::new(ScenarioSource::File(path)));
    assert_eq!(report.outcome.status, Status::Rejected);
    assert_eq!(report.exit_code(), 2);
    let rejection = report.outcome.rejection.as_ref().unwrap();
    assert_eq!((rejection.stage.as_str(), rejection.check.as_str()), ("scenario", "check_lyapunov"));
    assert!(report.critical.is_none() && report.identities.is_none());
    assert_eq!(schema_errors(&report), Vec::<String>::new());
}

#[test]
fn cup_selection_populates_only_the_cup_section() {
    let report = run_ok(&RunConfig { check: Check::Cup, ..builtin_config("round_sphere_height") });
    assert_eq!(report.outcome.status, Status::Pass, "{:?}", report.outcome.failures);
    let ids = report.identities.as_ref().unwrap();
    assert!(ids.cup.is_some());
    assert!(ids.delta2.is_none() && ids.chain_map.is_none() && ids.leibniz.is_none());
    assert!(ids.int_rank.is_none() && ids.convergence.is_none());
    assert!(report.detection.is_none() && report.basins.is_none());
    assert!(report.critical.is_none() && report.instantons.is_none() && report.complex.is_none());
    assert_eq!(schema_errors(&report), Vec::<String>::new());
}

#[test]
fn stage_reports_match_schema() {
    for stage in [Stage::Critical, Stage::Instantons, Stage::Cohomology] {
        let report = run_ok(&RunConfig { stage, ..builtin_config("flat_torus") });
        assert_eq!(report.outcome.status, Status::Pass);
        assert_eq!(schema_errors(&report), Vec::<String>::new(), "{stage:?}");
    }
}

#[test]
fn invalid_tolerances_are_config_errors() {
    for cfg in [
        RunConfig { tol_ode: 0.0, ..builtin_config("circle_cos") },
        RunConfig { tol_verify: -1e-6, ..builtin_config("circle_cos") },
        RunConfig { tol_quad: f64::NAN, ..builtin_config("circle_cos") },
    ] {
        let err = run(&cfg).unwrap_err();
        assert!(matches!(err, RunError::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}

#[test]
fn exported_scenarios_reload_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let files = emit_scenarios(dir.path()).unwrap();
    assert_eq!(files.len(), 5);
    for (name, path) in builtin_names().iter().zip(&files) {
        let s = Scenario::load(path).unwrap();
        assert_eq!(s.to_json(), builtin(name).unwrap().to_json(), "{name}");
        s.check_consistency(200, 0).unwrap();
    }
}

#[test]
fn reload_and_run_equals_builtin_run() {
    let dir = tempfile::tempdir().unwrap();
    emit_scenarios(dir.path()).unwrap();
    for name in ["circle_cos", "round_sphere_height"] {
        let from_file = run_ok(&RunConfig::new(ScenarioSource::File(dir.path().join(format!("{name}.json")))));
        let from_builtin = run_ok(&builtin_config(name));
        assert_eq!(from_file.to_json_without_timestamp(), from_builtin.to_json_without_timestamp(), "{name}");
    }
}

#[test]
fn export_to_unwritable_path_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let err = emit_scenarios(&blocker.join("sub")).unwrap_err();
    assert!(matches!(err, RunError::Io(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

fn morse(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_morse")).args(args).env("MORSE_THREADS", "1").output().unwrap()
}

#[test]
fn cli_lists_and_exports_scenarios() {
    let out = morse(&["scenarios", "list"]);
    assert!(out.status.success());
    let names: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(names, builtin_names());

    let dir = tempfile::tempdir().unwrap();
    let out = morse(&["scenarios", "export", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(builtin_names().iter().all(|n| dir.path().join(format!("{n}.json")).exists()));
}

#[test]
fn cli_writes_report_and_sets_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("report.json");
    let out = morse(&["cohomology", "circle_cos", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report["complex"]["cohomology"]["betti"], serde_json::json!([1, 1]));
    assert!(String::from_utf8(out.stdout).unwrap().contains("outcome"));

    let uphill_path = dir.path().join("uphill.json");
    uphill("circle_cos").save(&uphill_path).unwrap();
    assert_eq!(morse(&["run", uphill_path.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(morse(&["run", "circle_cos", "--tol-ode", "0"]).status.code(), Some(2));
    assert_eq!(morse(&["verify", "circle_cos", "--check", "bogus"]).status.code(), Some(2));
    assert_eq!(morse(&["run", "no_such_file.json"]).status.code(), Some(2));
    let blocked = dir.path().join("report.json").join("x.json");
    assert_eq!(morse(&["critical", "circle_cos", "--out", blocked.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn cli_stdout_report_is_the_json() {
    let out = morse(&["critical", "double_well_circle", "--tol", "1e-6"]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["tool"], "morse");
    assert_eq!(report["critical"]["counts"], serde_json::json!([2, 2]));
    assert!(Path::new(env!("CARGO_BIN_EXE_morse")).exists());
}
