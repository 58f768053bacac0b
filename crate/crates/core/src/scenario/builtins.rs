//! The five embedded scenarios with closed-form ground truth.

use crate::expr::{parse, Expr};

use super::{
    gradient_field, Axis, Chart, DifferentialForm, GlobalFunction, GroundTruth, InstantonCount, LabeledPoint,
    LocalForm, Scenario, ScenarioData, ScenarioError, Transition,
};

pub fn builtin_names() -> [&'static str; 5] {
    ["circle_cos", "double_well_circle", "round_sphere_height", "ellipsoid_sphere", "flat_torus"]
}

pub fn builtin_scenarios() -> Vec<Scenario> {
    builtin_names().iter().map(|n| builtin(n).expect("builtin names are valid")).collect()
}

pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    let data = match name {
        "circle_cos" => circle(name, "cos(2*pi*t1)", circle_cos_truth()),
        "double_well_circle" => circle(name, "cos(4*pi*t1)", double_well_truth()),
        "round_sphere_height" => sphere(name, |_, _, z| z, round_sphere_truth()),
        "ellipsoid_sphere" => sphere(
            name,
            |x, y, z| x.powi(2) + y.powi(2) * 2.0 + z.powi(2) * 3.0,
            ellipsoid_truth(),
        ),
        "flat_torus" => torus(name),
        _ => return Err(ScenarioError::UnknownBuiltin(name.to_string())),
    };
    Scenario::new(data)?.canonical()
}

fn e(s: &str) -> Expr {
    parse(s).expect("builtin expressions parse")
}

fn pt(chart: &str, coords: &[f64]) -> LabeledPoint {
    LabeledPoint { chart: chart.to_string(), coords: coords.to_vec() }
}

fn count(from: LabeledPoint, to: LabeledPoint, count: usize) -> InstantonCount {
    InstantonCount { from, to, count }
}

fn form(name: &str, dim: usize, degree: usize, per_chart: Vec<Vec<(Vec<usize>, Expr)>>) -> DifferentialForm {
    let local = per_chart
        .iter()
        .map(|terms| LocalForm::from_terms(dim, degree, terms).expect("builtin form terms are valid"))
        .collect();
    DifferentialForm::new(name, local).expect("builtin forms are valid")
}

fn circle(name: &str, f: &str, truth: GroundTruth) -> ScenarioData {
    let chart = Chart { id: "T".into(), axes: vec![Axis::periodic(0.0, 1.0)], transitions: vec![] };
    let metric = vec![Expr::one()];
    let f = e(f);
    let field = gradient_field(&metric, &f, 1);
    let forms = vec![
        DifferentialForm::function("one", &[Expr::one()], 1).with_flags(true, true),
        form("dt1", 1, 1, vec![vec![(vec![0], Expr::one())]]).with_flags(true, true),
        DifferentialForm::function("sin_2pi_t1", &[e("sin(2*pi*t1)")], 1),
        form("cos_2pi_t1_dt1", 1, 1, vec![vec![(vec![0], e("cos(2*pi*t1)"))]]),
    ];
    let functions = vec![
        GlobalFunction { name: "c1".into(), per_chart: vec![e("cos(2*pi*t1)")] },
        GlobalFunction { name: "s1".into(), per_chart: vec![e("sin(2*pi*t1)")] },
    ];
    ScenarioData {
        name: name.into(),
        dim: 1,
        charts: vec![chart],
        metric: vec![metric],
        field: vec![field],
        lyapunov: vec![f],
        forms,
        functions,
        ground_truth: Some(truth),
    }
}

fn circle_cos_truth() -> GroundTruth {
    GroundTruth {
        rest_points_per_index: vec![1, 1],
        betti: vec![1, 1],
        instantons: vec![count(pt("T", &[0.0]), pt("T", &[0.5]), 2)],
    }
}

fn double_well_truth() -> GroundTruth {
    let mut instantons = Vec::new();
    for max in [0.0, 0.5] {
        for min in [0.25, 0.75] {
            instantons.push(count(pt("T", &[max]), pt("T", &[min]), 1));
        }
    }
    GroundTruth { rest_points_per_index: vec![2, 2], betti: vec![1, 1], instantons }
}

fn torus(name: &str) -> ScenarioData {
    let chart = Chart {
        id: "T".into(),
        axes: vec![Axis::periodic(0.0, 1.0), Axis::periodic(0.0, 1.0)],
        transitions: vec![],
    };
    let metric = vec![Expr::one(), Expr::zero(), Expr::zero(), Expr::one()];
    let f = e("cos(2*pi*t1) + cos(2*pi*t2)");
    let field = gradient_field(&metric, &f, 2);
    let forms = vec![
        DifferentialForm::function("one", &[Expr::one()], 2).with_flags(true, true),
        form("dt1", 2, 1, vec![vec![(vec![0], Expr::one())]]).with_flags(true, true),
        form("dt2", 2, 1, vec![vec![(vec![1], Expr::one())]]).with_flags(true, true),
        form("dt1^dt2", 2, 2, vec![vec![(vec![0, 1], Expr::one())]]).with_flags(true, true),
        form("sin_2pi_t2_dt1", 2, 1, vec![vec![(vec![0], e("sin(2*pi*t2)"))]]),
        form("sin_2pi_t1_dt2", 2, 1, vec![vec![(vec![1], e("sin(2*pi*t1)"))]]),
        DifferentialForm::function("cos_2pi_t1_cos_2pi_t2", &[e("cos(2*pi*t1)*cos(2*pi*t2)")], 2),
    ];
    let functions = ["c1", "s1", "c2", "s2"]
        .iter()
        .zip(["cos(2*pi*t1)", "sin(2*pi*t1)", "cos(2*pi*t2)", "sin(2*pi*t2)"])
        .map(|(n, s)| GlobalFunction { name: (*n).into(), per_chart: vec![e(s)] })
        .collect();
    let (max, min) = (pt("T", &[0.0, 0.0]), pt("T", &[0.5, 0.5]));
    let saddles = [pt("T", &[0.5, 0.0]), pt("T", &[0.0, 0.5])];
    let mut instantons = Vec::new();
    for s in &saddles {
        instantons.push(count(max.clone(), s.clone(), 2));
        instantons.push(count(s.clone(), min.clone(), 2));
    }
    ScenarioData {
        name: name.into(),
        dim: 2,
        charts: vec![chart],
        metric: vec![metric],
        field: vec![field],
        lyapunov: vec![f],
        forms,
        functions,
        ground_truth: Some(GroundTruth { rest_points_per_index: vec![1, 2, 1], betti: vec![1, 2, 1], instantons }),
    }
}

/// Embedding `(x, y, z)` of the unit sphere in each stereographic chart.
/// Chart `S` is centered at the south pole, chart `N` at the north pole;
/// the transition `(t1, t2) -> (t1, -t2)/|t|²` is orientation preserving.
fn sphere_embedding() -> [[Expr; 3]; 2] {
    let s = [
        e("2*t1/(1 + t1^2 + t2^2)"),
        e("2*t2/(1 + t1^2 + t2^2)"),
        e("(t1^2 + t2^2 - 1)/(t1^2 + t2^2 + 1)"),
    ];
    let n = [
        e("2*t1/(1 + t1^2 + t2^2)"),
        e("-2*t2/(1 + t1^2 + t2^2)"),
        e("(1 - t1^2 - t2^2)/(1 + t1^2 + t2^2)"),
    ];
    [s, n]
}

fn sphere(name: &str, f: impl Fn(Expr, Expr, Expr) -> Expr, truth: GroundTruth) -> ScenarioData {
    let inversion = || vec![e("t1/(t1^2 + t2^2)"), e("-t2/(t1^2 + t2^2)")];
    // |u| in (1/sqrt(8), sqrt(8)) is closed under inversion; the upper bound holds on the whole box
    let overlap = || e("t1^2 + t2^2 - 0.125");
    let axes = vec![Axis::bounded(-2.0, 2.0), Axis::bounded(-2.0, 2.0)];
    let charts = vec![
        Chart {
            id: "S".into(),
            axes: axes.clone(),
            transitions: vec![Transition::new(1, overlap(), inversion(), inversion())],
        },
        Chart { id: "N".into(), axes, transitions: vec![Transition::new(0, overlap(), inversion(), inversion())] },
    ];
    let conformal = e("4/(1 + t1^2 + t2^2)^2");
    let metric = vec![conformal.clone(), Expr::zero(), Expr::zero(), conformal];
    let emb = sphere_embedding();
    let lyapunov: Vec<Expr> =
        emb.iter().map(|[x, y, z]| f(x.clone(), y.clone(), z.clone()).simplify()).collect();
    let field = lyapunov.iter().map(|f| gradient_field(&metric, f, 2)).collect();
    let area = e("(1/pi)/(1 + t1^2 + t2^2)^2");
    let forms = vec![
        DifferentialForm::function("one", &[Expr::one(), Expr::one()], 2).with_flags(true, true),
        form("area", 2, 2, vec![vec![(vec![0, 1], area.clone())], vec![(vec![0, 1], area)]]).with_flags(true, true),
        DifferentialForm::function("z", &[emb[0][2].clone(), emb[1][2].clone()], 2),
        DifferentialForm::new(
            "x_dy",
            emb.iter().map(|[x, y, _]| LocalForm::differential(2, y).scale(x)).collect(),
        )
        .expect("valid 1-form"),
    ];
    let functions = ["x", "y", "z"]
        .iter()
        .enumerate()
        .map(|(k, n)| GlobalFunction { name: (*n).into(), per_chart: vec![emb[0][k].clone(), emb[1][k].clone()] })
        .collect();
    ScenarioData {
        name: name.into(),
        dim: 2,
        charts,
        metric: vec![metric.clone(), metric],
        field,
        lyapunov,
        forms,
        functions,
        ground_truth: Some(truth),
    }
}

fn round_sphere_truth() -> GroundTruth {
    GroundTruth { rest_points_per_index: vec![1, 0, 1], betti: vec![1, 0, 1], instantons: vec![] }
}

fn ellipsoid_truth() -> GroundTruth {
    // (±1,0,0) are u = (±1,0) and (0,±1,0) are u = (0,±1) in chart S;
    // (0,0,1) is the origin of chart N and (0,0,-1) the origin of chart S.
    let maxima = [pt("N", &[0.0, 0.0]), pt("S", &[0.0, 0.0])];
    let saddles = [pt("S", &[0.0, 1.0]), pt("S", &[0.0, -1.0])];
    let minima = [pt("S", &[1.0, 0.0]), pt("S", &[-1.0, 0.0])];
    let mut instantons = Vec::new();
    for s in &saddles {
        for m in &maxima {
            instantons.push(count(m.clone(), s.clone(), 1));
        }
        for m in &minima {
            instantons.push(count(s.clone(), m.clone(), 1));
        }
    }
    GroundTruth { rest_points_per_index: vec![2, 2, 2], betti: vec![1, 0, 1], instantons }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_build_and_pass_consistency() {
        for s in builtin_scenarios() {
            let r = s.check_consistency(200, 7).unwrap_or_else(|e| panic!("{}: {e}", s.name));
            assert!(r.worst_roundtrip < 1e-9, "{}", s.name);
        }
    }

    #[test]
    fn sphere_field_in_south_chart_is_radial() {
        let s = builtin("round_sphere_height").unwrap();
        let x = s.field_at(0, &[0.3, -0.2]).unwrap();
        assert!((x[0] + 0.3).abs() < 1e-14 && (x[1] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(builtin("klein_bottle"), Err(ScenarioError::UnknownBuiltin(_))));
    }
}
