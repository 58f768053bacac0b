//! Acceptance criteria 1 to 10, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines always print and the wall
//! times are measured on an otherwise idle process.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use morse_core::report::{run, RunConfig, ScenarioSource, Stage};
use morse_core::scenario::builtin_names;
use serde_json::Value;

const NEWTON_RESIDUAL: f64 = 1e-12;
const CRITICAL_SECONDS: f64 = 5.0;
const IDENTITY_TOL: f64 = 1e-6;
const TORUS_CUP_TOL: f64 = 1e-4;
const SPHERE_CUP_TOL: f64 = 1e-6;
const CONVERGENCE_TOL: f64 = 1e-7;
const BASIN_SAMPLES: u64 = 10_000;
const SUITE_SECONDS: f64 = 300.0;
const RANDOM_ORIENTATIONS: usize = 20;
const RANDOM_FORMS: usize = 10;

/// Rest points per index.
fn expected_counts(name: &str) -> Vec<u64> {
    match name {
        "circle_cos" => vec![1, 1],
        "double_well_circle" => vec![2, 2],
        "round_sphere_height" => vec![1, 0, 1],
        "ellipsoid_sphere" => vec![2, 2, 2],
        "flat_torus" => vec![1, 2, 1],
        _ => unreachable!(),
    }
}

/// Simplicial Betti numbers.
fn expected_betti(name: &str) -> Vec<u64> {
    match name {
        "circle_cos" | "double_well_circle" => vec![1, 1],
        "round_sphere_height" | "ellipsoid_sphere" => vec![1, 0, 1],
        "flat_torus" => vec![1, 2, 1],
        _ => unreachable!(),
    }
}

/// Adjacent gap-one pairs and the instanton count of each.
fn expected_pairs(name: &str) -> (usize, u64) {
    match name {
        "circle_cos" => (1, 2),
        "double_well_circle" => (4, 1),
        "round_sphere_height" => (0, 0),
        "ellipsoid_sphere" => (8, 1),
        "flat_torus" => (4, 2),
        _ => unreachable!(),
    }
}

struct ScenarioRun {
    name: &'static str,
    critical_time: Duration,
    full_time: Duration,
    report: Value,
    reproduced: bool,
}

impl ScenarioRun {
    fn at(&self, pointer: &str) -> &Value {
        self.report.pointer(pointer).unwrap_or(&Value::Null)
    }
}

fn config(name: &str) -> RunConfig {
    RunConfig::new(ScenarioSource::Builtin(name.to_string()))
}

fn execute(name: &'static str) -> Result<ScenarioRun, String> {
    let start = Instant::now();
    run(&RunConfig { stage: Stage::Critical, ..config(name) }).map_err(|e| format!("{name}: {e}"))?;
    let critical_time = start.elapsed();
    let start = Instant::now();
    let first = run(&config(name)).map_err(|e| format!("{name}: {e}"))?;
    let full_time = start.elapsed();
    let second = run(&config(name)).map_err(|e| format!("{name}: {e}"))?;
    let reproduced = first.to_json_without_timestamp() == second.to_json_without_timestamp();
    let report = serde_json::from_str(&first.to_json()).map_err(|e| e.to_string())?;
    Ok(ScenarioRun { name, critical_time, full_time, report, reproduced })
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn array(v: &Value) -> &[Value] {
    v.as_array().map(Vec::as_slice).unwrap_or(&[])
}

fn u64s(v: &Value) -> Vec<u64> {
    array(v).iter().filter_map(Value::as_u64).collect()
}

/// Collects the problems of one criterion; empty means pass.
#[derive(Default)]
struct Findings(Vec<String>);

impl Findings {
    fn require(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }
}

fn criterion_1(runs: &[ScenarioRun]) -> (Findings, String) {
    let mut out = Findings::default();
    let mut worst_residual = 0.0f64;
    let mut slowest = 0.0f64;
    for r in runs {
        let counts = u64s(r.at("/critical/counts"));
        out.require(counts == expected_counts(r.name), || format!("{}: counts {counts:?}", r.name));
        for p in array(r.at("/critical/rest_points")) {
            let residual = f(&p["residual"]);
            worst_residual = worst_residual.max(residual);
            out.require(residual < NEWTON_RESIDUAL, || format!("{}: residual {residual:e}", r.name));
            let hyperbolic = array(&p["eigenvalues"]).iter().all(|l| f(&l["re"]).abs() > 1e-8);
            out.require(hyperbolic, || format!("{}: rest point {} not hyperbolic", r.name, p["id"]));
        }
        let secs = r.critical_time.as_secs_f64();
        slowest = slowest.max(secs);
        out.require(secs < CRITICAL_SECONDS, || format!("{}: {secs:.2} s", r.name));
    }
    (out, format!("worst Newton residual {worst_residual:.1e}, slowest certification {slowest:.2} s"))
}

fn criterion_2(runs: &[ScenarioRun]) -> (Findings, String) {
    let mut out = Findings::default();
    let mut total = 0;
    for r in runs {
        let (pairs, per_pair) = expected_pairs(r.name);
        let found: Vec<&Value> = array(r.at("/instantons/pairs")).iter().filter(|p| p["count"].as_u64() != Some(0)).collect();
        out.require(found.len() == pairs, || format!("{}: {} connected pairs, expected {pairs}", r.name, found.len()));
        for p in &found {
            let (count, halved) = (p["count"].as_u64().unwrap_or(0), p["halved"].as_u64().unwrap_or(0));
            total += count;
            out.require(count == per_pair, || format!("{}: pair {}>{} has {count}", r.name, p["from"], p["to"]));
            out.require(halved == count, || format!("{}: pair {}>{} halved tolerance gives {halved}", r.name, p["from"], p["to"]));
        }
    }
    (out, format!("{total} instantons, all stable under halved integrator tolerance"))
}

fn criterion_3(runs: &[ScenarioRun]) -> (Findings, String) {
    let mut out = Findings::default();
    let mut cancellations = 0;
    for r in runs {
        out.require(r.at("/identities/delta2/report/holds") == &Value::Bool(true), || format!("{}: delta^2 != 0", r.name));
        let trials = array(r.at("/identities/delta2/random_orientations"));
        out.require(trials.len() == RANDOM_ORIENTATIONS, || format!("{}: {} orientation trials", r.name, trials.len()));
        out.require(trials.iter().all(|t| t["holds"] == Value::Bool(true)), || format!("{}: a reorientation breaks delta^2", r.name));
        if r.name == "ellipsoid_sphere" {
            cancellations = array(r.at("/identities/delta2/report/cancellations")).len();
            out.require(cancellations > 0, || "ellipsoid: no two-chain cancellation".into());
        }
    }
    (out, format!("exact on 5 builtins x (1 + {RANDOM_ORIENTATIONS}) orientations, {cancellations} ellipsoid cancellations"))
}

fn criterion_4(runs: &[ScenarioRun]) -> (Findings, String) {
    let mut out = Findings::default();
    let mut shown = Vec::new();
    for r in runs {
        let betti = u64s(r.at("/complex/cohomology/betti"));
        let oracle = u64s(r.at("/complex/cohomology/oracle"));
        out.require(betti == expected_betti(r.name), || format!("{}: betti {betti:?}", r.name));
        out.require(oracle == expected_betti(r.name), || format!("{}: simplicial oracle {oracle:?}", r.name));
        let ineq = r.at("/complex/cohomology/inequalities");
        out.require(array(&ineq["degrees"]).iter().all(|d| d["holds"] == Value::Bool(true)), || format!("{}: Morse inequality fails", r.name));
        out.require(ineq["euler_holds"] == Value::Bool(true), || format!("{}: Euler characteristic mismatch", r.name));
        shown.push(format!("{betti:?}"));
    }
    (out, format!("betti {}", shown.join(" ")))
}

fn identity_residuals(checks: &[Value]) -> f64 {
    checks.iter().map(|c| f(&c["residual"])).fold(0.0, f64::max)
}

fn criterion_5(runs: &[ScenarioRun]) -> (Findings, String) {
    let mut out = Findings::default();
    let mut worst = 0.0f64;
    for r in runs {
        let checks = array(r.at("/identities/chain_map"));
        let randoms = checks.iter().filter(|c| c["name"].as_str().is_some_and(|n| n.contains("random"))).count();
        out.require(randoms >= RANDOM_FORMS, || format!("{}: {randoms} random forms", r.name));
        let w = identity_residuals(checks);
        worst = worst.max(w);
        out.require(w < IDENTITY_TOL, || format!("{}: chain map residual {w:e}", r.name));
        if r.name == "double_well_circle" {
            let example = checks.iter().find(|c| c["name"] == "chain_map[sin_2pi_t1]");
            let twos = example.is_some_and(|c| {
                let (l, rt) = (array(&c["left"]), array(&c["right"]));
                l.iter().zip(rt).any(|(a, b)| (f(a).abs() - 2.0).abs() < 1e-12 && (f(b).abs() - 2.0).abs() < IDENTITY_TOL)
            });
            out.require(twos, || "double well: analytic value 2 not reproduced".into());
        }
    }
    (out, format!("max residual {worst:.1e} (double-well value 2 on both sides)"))
}

fn criterion_6(runs: &[ScenarioRun]) -> (Findings, String) {
    let mut out = Findings::default();
    let torus = runs.iter().find(|r| r.name == "flat_torus").unwrap();
    let checks = array(torus.at("/identities/leibniz"));
    out.require(checks.len() >= RANDOM_FORMS, || format!("{} Leibniz pairs", checks.len()));
    let w = identity_residuals(checks);
    out.require(w < IDENTITY_TOL, || format!("residual {w:e}"));
    (out, format!("{} torus pairs, max residual {w:.1e}", checks.len()))
}

fn cup<'a>(r: &'a ScenarioRun, left: &str, right: &str) -> Option<&'a Value> {
    array(r.at("/identities/cup/checks")).iter().find(|c| c["left_form"] == left && c["right_form"] == right)
}

fn criterion_7(runs: &[ScenarioRun]) -> (Findings, String) {
    let mut out = Findings::default();
    let torus = runs.iter().find(|r| r.name == "flat_torus").unwrap();
    let sphere = runs.iter().find(|r| r.name == "round_sphere_height").unwrap();
    let mut torus_value = f64::NAN;
    match cup(torus, "dt1", "dt2") {
        Some(c) => {
            // Int(dt1^dt2) lives on the single maximum
            let (l, e) = (f(&c["values"]["left"][0]), f(&c["values"]["right"][0]));
            torus_value = l;
            out.require((l.abs() - 1.0).abs() < TORUS_CUP_TOL, || format!("torus Int(dt1^dt2)(max) = {l}"));
            out.require((l - e).abs() < TORUS_CUP_TOL, || format!("torus E(dt1 x Int dt2)(max) = {e} vs {l}"));
        }
        None => out.0.push("torus dt1 x dt2 cup check missing".into()),
    }
    match cup(sphere, "area", "one") {
        Some(c) => {
            let res = f(&c["values"]["residual"]);
            out.require(res < SPHERE_CUP_TOL, || format!("sphere (2,0) residual {res:e}"));
        }
        None => out.0.push("sphere area x one cup check missing".into()),
    }
    for r in runs {
        out.require(r.at("/identities/cup/verdict") == "pass", || format!("{}: cup verdict {}", r.name, r.at("/identities/cup/verdict")));
        let flips = array(r.at("/identities/cup/orientation_flips"));
        out.require(!flips.is_empty() && flips.iter().all(|x| x["invariant"] == Value::Bool(true)), || format!("{}: flip changes a verdict", r.name));
    }
    (out, format!("torus Int(dt1^dt2)(max) = {torus_value:.9}, verdicts invariant under every single flip"))
}

fn criterion_8(runs: &[ScenarioRun]) -> (Findings, String) {
    let mut out = Findings::default();
    let mut witnesses = 0;
    for r in runs {
        let detections = array(r.at("/detection/detections"));
        for c in array(r.at("/identities/cup/checks")) {
            let degree = c["degrees"][0].as_u64().unwrap_or(0);
            if c["product_nontrivial"] != Value::Bool(true) || degree == 0 {
                continue;
            }
            let product = format!("{} x {}", c["left_form"].as_str().unwrap_or(""), c["right_form"].as_str().unwrap_or(""));
            let d = detections.iter().find(|d| d["product"] == product.as_str());
            let ok = d.is_some_and(|d| {
                d["gap"].as_u64() == Some(degree) && d["stratum_size"].as_u64().unwrap_or(0) > 0 && d["witness"].is_array() && d["verdict"] == "pass"
            });
            witnesses += usize::from(ok);
            out.require(ok, || format!("{}: {product} has no witnessed gap-{degree} stratum", r.name));
        }
        out.require(r.at("/detection/verdict") == "pass", || format!("{}: detection verdict", r.name));
    }
    (out, format!("{witnesses} nontrivial products, each with a witness pair"))
}

fn criterion_9(runs: &[ScenarioRun]) -> (Findings, String) {
    let mut out = Findings::default();
    let mut worst = 0.0f64;
    for r in runs {
        let change = f(r.at("/identities/convergence/max_change"));
        worst = worst.max(change);
        out.require(change < CONVERGENCE_TOL, || format!("{}: order doubling changes {change:e}", r.name));
        let (samples, classified) = (r.at("/basins/report/samples").as_u64(), r.at("/basins/report/classified").as_u64());
        out.require(samples == Some(BASIN_SAMPLES) && classified == samples, || format!("{}: basins {classified:?} of {samples:?}", r.name));
    }
    (out, format!("max change {worst:.1e}, basins {BASIN_SAMPLES} of {BASIN_SAMPLES} everywhere"))
}

fn criterion_10(runs: &[ScenarioRun], suite: Duration) -> (Findings, String) {
    let mut out = Findings::default();
    let secs = suite.as_secs_f64();
    out.require(secs < SUITE_SECONDS, || format!("suite took {secs:.1} s"));
    for r in runs {
        out.require(r.reproduced, || format!("{}: repeated run differs", r.name));
        out.require(r.at("/outcome/status") == "pass", || format!("{}: outcome {}", r.name, r.at("/outcome/status")));
    }
    let per: Vec<String> = runs.iter().map(|r| format!("{} {:.1}s", r.name, r.full_time.as_secs_f64())).collect();
    (out, format!("{secs:.1} s for all scenarios and checks ({}), repeated runs identical", per.join(", ")))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let runs: Result<Vec<ScenarioRun>, String> = builtin_names().into_iter().map(execute).collect();
    let runs = match runs {
        Ok(r) => r,
        Err(e) => {
            println!("acceptance: pipeline error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let suite: Duration = runs.iter().map(|r| r.full_time).sum();
    println!("acceptance: {} scenarios run in {:.1} s", runs.len(), start.elapsed().as_secs_f64());

    let results = [
        ("rest-point certification", criterion_1(&runs)),
        ("instanton enumeration", criterion_2(&runs)),
        ("coboundary squares to zero", criterion_3(&runs)),
        ("Betti numbers and Morse inequalities", criterion_4(&runs)),
        ("chain-map identity", criterion_5(&runs)),
        ("Leibniz identity", criterion_6(&runs)),
        ("cup-product diagram", criterion_7(&runs)),
        ("detection witnesses", criterion_8(&runs)),
        ("quadrature convergence and basins", criterion_9(&runs)),
        ("suite time and reproducibility", criterion_10(&runs, suite)),
    ];
    let mut failed = 0;
    for (k, (title, (findings, detail))) in results.iter().enumerate() {
        if findings.0.is_empty() {
            println!("criterion {:>2} PASS  {title}: {detail}", k + 1);
        } else {
            failed += 1;
            println!("criterion {:>2} FAIL  {title}: {}", k + 1, findings.0.join("; "));
        }
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
