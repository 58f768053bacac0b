//! Manifold data: atlas, metric, vector field, Lyapunov function and a
//! library of differential forms, all given by expressions.

mod builtins;
mod chart;
mod form;
mod io;
mod lyapunov;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{with_scratch, EvalError, Expr, ParseError, Tape};
use crate::linalg;

pub use builtins::{builtin, builtin_names, builtin_scenarios};
pub use chart::{Axis, Chart, Transition, INNER_FRACTION};
pub use form::{binomial, contract, multi_indices, DifferentialForm, FormError, LocalForm};
pub use io::ScenarioFile;
pub use lyapunov::{check_lyapunov, LyapunovCertificate};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse {context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: ParseError,
    },
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error("unknown chart `{0}`")]
    UnknownChart(String),
    #[error("unknown builtin scenario `{0}`")]
    UnknownBuiltin(String),
    #[error("form error in `{name}`: {source}")]
    Form {
        name: String,
        #[source]
        source: FormError,
    },
    #[error("consistency check `{check}` failed: {detail}")]
    Inconsistent { check: &'static str, detail: String },
    #[error("not a Lyapunov function: df(X) = {value:e} at chart {chart} point {point:?}")]
    NonLyapunov { chart: String, point: Vec<f64>, value: f64 },
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A point given by chart index and coordinates in that chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: usize,
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(chart: usize, coords: Vec<f64>) -> ChartPoint {
        ChartPoint { chart, coords }
    }
}

/// A smooth function on the manifold, one expression per chart.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFunction {
    pub name: String,
    pub per_chart: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub chart: String,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstantonCount {
    pub from: LabeledPoint,
    pub to: LabeledPoint,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rest_points_per_index: Vec<usize>,
    pub betti: Vec<usize>,
    #[serde(default)]
    pub instantons: Vec<InstantonCount>,
}

/// Everything that defines a scenario; [`Scenario::new`] validates and compiles it.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub name: String,
    pub dim: usize,
    pub charts: Vec<Chart>,
    /// Per chart, row-major `n`×`n`.
    pub metric: Vec<Vec<Expr>>,
    pub field: Vec<Vec<Expr>>,
    pub lyapunov: Vec<Expr>,
    pub forms: Vec<DifferentialForm>,
    pub functions: Vec<GlobalFunction>,
    pub ground_truth: Option<GroundTruth>,
}

#[derive(Debug, Clone)]
struct Kernel {
    field: Tape,
    field_jac: Tape,
    lyapunov: Tape,
    metric: Tape,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub charts: Vec<Chart>,
    pub metric: Vec<Vec<Expr>>,
    pub field: Vec<Vec<Expr>>,
    pub lyapunov: Vec<Expr>,
    pub forms: Vec<DifferentialForm>,
    pub functions: Vec<GlobalFunction>,
    pub ground_truth: Option<GroundTruth>,
    kernels: Vec<Kernel>,
}

/// `X = -g^{-1} df`, built symbolically.
pub fn gradient_field(metric: &[Expr], f: &Expr, n: usize) -> Vec<Expr> {
    let df = f.gradient(n);
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || metric[i * n + j].is_zero()));
    if diagonal {
        return (0..n).map(|i| -(df[i].clone() / metric[i * n + i].clone())).collect();
    }
    let inv = symbolic_inverse(metric, n);
    (0..n)
        .map(|i| {
            let s = (0..n).fold(Expr::zero(), |acc, j| acc + inv[i * n + j].clone() * df[j].clone());
            -s
        })
        .collect()
}

fn minor(m: &[Expr], n: usize, row: usize, col: usize) -> Vec<Expr> {
    (0..n)
        .filter(|&i| i != row)
        .flat_map(|i| (0..n).filter(move |&j| j != col).map(move |j| (i, j)))
        .map(|(i, j)| m[i * n + j].clone())
        .collect()
}

fn symbolic_det(m: &[Expr], n: usize) -> Expr {
    match n {
        0 => Expr::one(),
        1 => m[0].clone(),
        _ => (0..n).fold(Expr::zero(), |acc, j| {
            let term = m[j].clone() * symbolic_det(&minor(m, n, 0, j), n - 1);
            if j % 2 == 0 {
                acc + term
            } else {
                acc - term
            }
        }),
    }
}

fn symbolic_inverse(m: &[Expr], n: usize) -> Vec<Expr> {
    let det = symbolic_det(m, n);
    let mut inv = vec![Expr::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let c = symbolic_det(&minor(m, n, j, i), n - 1);
            let c = if (i + j) % 2 == 0 { c } else { -c };
            inv[i * n + j] = c / det.clone();
        }
    }
    inv
}

impl Scenario {
    pub fn new(data: ScenarioData) -> Result<Scenario, ScenarioError> {
        let n = data.dim;
        let k = data.charts.len();
        let bad = |m: String| Err(ScenarioError::Malformed(m));
        if n == 0 || k == 0 {
            return bad("dimension and chart count must be positive".into());
        }
        if data.metric.len() != k || data.field.len() != k || data.lyapunov.len() != k {
            return bad(format!("metric, vector field and lyapunov need one entry per chart ({k})"));
        }
        for (c, chart) in data.charts.iter().enumerate() {
            if chart.dim() != n {
                return bad(format!("chart `{}` has {} axes, expected {n}", chart.id, chart.dim()));
            }
            if chart.axes.iter().any(|a| !(a.lo.is_finite() && a.hi.is_finite() && a.hi > a.lo)) {
                return bad(format!("chart `{}` has an empty or infinite axis", chart.id));
            }
            if data.metric[c].len() != n * n || data.field[c].len() != n {
                return bad(format!("chart `{}`: metric needs {} and field {n} entries", chart.id, n * n));
            }
            for t in &chart.transitions {
                if t.target >= k || t.target == c || t.map.len() != n || t.inverse.len() != n {
                    return bad(format!("chart `{}` has a malformed transition", chart.id));
                }
            }
            let exprs = data.metric[c].iter().chain(&data.field[c]).chain([&data.lyapunov[c]]);
            if exprs.into_iter().any(|e| e.arity() > n) {
                return bad(format!("chart `{}` uses coordinates beyond t{n}", chart.id));
            }
        }
        for w in &data.forms {
            if w.local.len() != k || w.dim != n {
                return bad(format!("form `{}` must have one entry per chart and dimension {n}", w.name));
            }
        }
        for g in &data.functions {
            if g.per_chart.len() != k {
                return bad(format!("function `{}` must have one entry per chart", g.name));
            }
        }
        let kernels = (0..k)
            .map(|c| {
                let field = &data.field[c];
                let jac: Vec<Expr> = field.iter().flat_map(|x| x.gradient(n)).collect();
                let fj: Vec<Expr> = field.iter().cloned().chain(jac).collect();
                let f = &data.lyapunov[c];
                let lyap: Vec<Expr> = std::iter::once(f.clone()).chain(f.gradient(n)).collect();
                Kernel {
                    field: Tape::compile(field),
                    field_jac: Tape::compile(&fj),
                    lyapunov: Tape::compile(&lyap),
                    metric: Tape::compile(&data.metric[c]),
                }
            })
            .collect();
        Ok(Scenario {
            name: data.name,
            dim: n,
            charts: data.charts,
            metric: data.metric,
            field: data.field,
            lyapunov: data.lyapunov,
            forms: data.forms,
            functions: data.functions,
            ground_truth: data.ground_truth,
            kernels,
        })
    }

    pub fn data(&self) -> ScenarioData {
        ScenarioData {
            name: self.name.clone(),
            dim: self.dim,
            charts: self.charts.clone(),
            metric: self.metric.clone(),
            field: self.field.clone(),
            lyapunov: self.lyapunov.clone(),
            forms: self.forms.clone(),
            functions: self.functions.clone(),
            ground_truth: self.ground_truth.clone(),
        }
    }

    /// Same manifold with `X` and `f` negated.
    pub fn time_reversed(&self) -> Scenario {
        let mut d = self.data();
        d.name = format!("{}_reversed", self.name);
        d.field = d.field.iter().map(|v| v.iter().map(|x| -x.clone()).collect()).collect();
        d.lyapunov = d.lyapunov.iter().map(|f| -f.clone()).collect();
        d.ground_truth = None;
        Scenario::new(d).expect("reversal keeps a valid scenario valid")
    }

    pub fn chart_index(&self, id: &str) -> Result<usize, ScenarioError> {
        self.charts.iter().position(|c| c.id == id).ok_or_else(|| ScenarioError::UnknownChart(id.to_string()))
    }

    pub fn form(&self, name: &str) -> Option<&DifferentialForm> {
        self.forms.iter().find(|w| w.name == name)
    }

    pub fn field_into(&self, chart: usize, p: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        with_scratch(|s| self.kernels[chart].field.eval_into(p, s, out))
    }

    pub fn field_at(&self, chart: usize, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.dim];
        self.field_into(chart, p, &mut out)?;
        Ok(out)
    }

    /// `X` followed by the row-major Jacobian `DX` (length `n + n²`).
    pub fn field_jacobian_into(&self, chart: usize, p: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        with_scratch(|s| self.kernels[chart].field_jac.eval_into(p, s, out))
    }

    pub fn jacobian_at(&self, chart: usize, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        let n = self.dim;
        let mut out = vec![0.0; n + n * n];
        self.field_jacobian_into(chart, p, &mut out)?;
        Ok(out.split_off(n))
    }

    /// `f` followed by its gradient (length `1 + n`).
    pub fn lyapunov_into(&self, chart: usize, p: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        with_scratch(|s| self.kernels[chart].lyapunov.eval_into(p, s, out))
    }

    pub fn f_at(&self, chart: usize, p: &[f64]) -> Result<f64, EvalError> {
        let mut out = vec![0.0; self.dim + 1];
        self.lyapunov_into(chart, p, &mut out)?;
        Ok(out[0])
    }

    pub fn metric_at(&self, chart: usize, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.dim * self.dim];
        with_scratch(|s| self.kernels[chart].metric.eval_into(p, s, &mut out))?;
        Ok(out)
    }

    /// `df(X)` at a point.
    pub fn lyapunov_derivative(&self, chart: usize, p: &[f64]) -> Result<f64, EvalError> {
        let x = self.field_at(chart, p)?;
        let mut fg = vec![0.0; self.dim + 1];
        self.lyapunov_into(chart, p, &mut fg)?;
        Ok(linalg::dot(&fg[1..], &x))
    }

    fn transition_to(&self, from: usize, p: &[f64], to: usize) -> Option<(&Transition, Vec<f64>)> {
        self.charts[from].transitions.iter().filter(|t| t.target == to).find_map(|t| {
            if t.overlap_value(p).ok()? <= 0.0 {
                return None;
            }
            let mut q = t.apply(p).ok()?;
            let target = &self.charts[to];
            target.wrap(&mut q);
            target.contains(&q).then_some((t, q))
        })
    }

    /// Coordinates of `p` (in chart `from`) in chart `to`, if the charts overlap there.
    pub fn convert(&self, from: usize, p: &[f64], to: usize) -> Option<Vec<f64>> {
        if from == to {
            return Some(p.to_vec());
        }
        self.transition_to(from, p, to).map(|(_, q)| q)
    }

    /// Converted point and the transition Jacobian (row-major) at `p`.
    pub fn convert_with_jacobian(&self, from: usize, p: &[f64], to: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.dim;
        if from == to {
            let id = (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 } else { 0.0 }).collect();
            return Some((p.to_vec(), id));
        }
        let (t, q) = self.transition_to(from, p, to)?;
        let j = t.jacobian(p).ok()?;
        Some((q, j))
    }

    pub fn point_in(&self, p: &ChartPoint, to: usize) -> Option<Vec<f64>> {
        self.convert(p.chart, &p.coords, to)
    }

    /// Chart where `p` sits deepest inside the box, with its coordinates there.
    pub fn home(&self, p: &ChartPoint) -> ChartPoint {
        let mut best = (self.charts[p.chart].depth(&p.coords), p.clone());
        for t in &self.charts[p.chart].transitions {
            if let Some(q) = self.convert(p.chart, &p.coords, t.target) {
                let d = self.charts[t.target].depth(&q);
                if d > best.0 + 1e-12 {
                    best = (d, ChartPoint::new(t.target, q));
                }
            }
        }
        best.1
    }

    /// Handoff target when `p` has left the inner box of `chart`.
    pub fn handoff(&self, chart: usize, p: &[f64]) -> Option<(usize, Vec<f64>)> {
        let here = self.charts[chart].depth(p);
        self.charts[chart]
            .transitions
            .iter()
            .filter_map(|t| self.convert(chart, p, t.target).map(|q| (t.target, q)))
            .map(|(c, q)| (self.charts[c].depth(&q), c, q))
            .filter(|(d, _, _)| *d > here)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, c, q)| (c, q))
    }

    /// Distance between two points measured in the chart of `a` (or of `b`
    /// when `b` cannot be expressed there); infinite when neither works.
    pub fn distance(&self, a: &ChartPoint, b: &ChartPoint) -> f64 {
        if let Some(q) = self.point_in(b, a.chart) {
            return self.charts[a.chart].distance(&a.coords, &q);
        }
        if let Some(q) = self.point_in(a, b.chart) {
            return self.charts[b.chart].distance(&q, &b.coords);
        }
        f64::INFINITY
    }

    /// Uniform sample in the box of `chart`.
    pub fn sample_in_chart(&self, chart: usize, rng: &mut impl Rng) -> Vec<f64> {
        self.charts[chart]
            .axes
            .iter()
            .map(|a| {
                let u: f64 = rng.gen_range(0.0..1.0);
                if a.periodic {
                    a.lo + u * a.width()
                } else {
                    // stay off the open boundary
                    a.lo + (0.001 + 0.998 * u) * a.width()
                }
            })
            .collect()
    }

    /// Sampled checks of every consistency invariant of the atlas and its data.
    pub fn check_consistency(&self, samples: usize, seed: u64) -> Result<ConsistencyReport, ScenarioError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = ConsistencyReport::default();
        let n = self.dim;
        let fail = |check: &'static str, detail: String| Err(ScenarioError::Inconsistent { check, detail });

        for (c, chart) in self.charts.iter().enumerate() {
            for _ in 0..samples {
                let p = self.sample_in_chart(c, &mut rng);
                let g = nalgebra::DMatrix::from_row_slice(n, n, &self.metric_at(c, &p)?);
                let asym = (&g - g.transpose()).amax();
                if asym > 1e-12 {
                    return fail("metric symmetric", format!("chart {} at {p:?}: asymmetry {asym:e}", chart.id));
                }
                let min_eig = g.symmetric_eigenvalues().min();
                if min_eig <= 1e-9 {
                    return fail("metric positive", format!("chart {} at {p:?}: eigenvalue {min_eig:e}", chart.id));
                }
                report.min_metric_eigenvalue = report.min_metric_eigenvalue.min(min_eig);
                for w in self.forms.iter().filter(|w| w.closed && w.degree < n) {
                    let dw = w.exterior_derivative().map_err(|e| ScenarioError::Form { name: w.name.clone(), source: e })?;
                    let worst = dw.coeffs(c, &p)?.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    if worst > 1e-9 {
                        return fail("closed form", format!("`{}` has |dw| = {worst:e} at {p:?}", w.name));
                    }
                }
            }

            for t in &chart.transitions {
                let target = &self.charts[t.target];
                let mut sign = 0.0;
                let mut found = 0;
                for _ in 0..samples.saturating_mul(20) {
                    if found == samples {
                        break;
                    }
                    let p = self.sample_in_chart(c, &mut rng);
                    let Some((q, jac)) = self.convert_with_jacobian(c, &p, t.target) else { continue };
                    found += 1;
                    let back = t.apply_inverse(&q)?;
                    let err = chart.distance(&back, &p);
                    report.worst_roundtrip = report.worst_roundtrip.max(err);
                    if err > 1e-9 {
                        return fail("transition roundtrip", format!("{} -> {} at {p:?}: {err:e}", chart.id, target.id));
                    }
                    let d = linalg::det(&jac, n);
                    if sign == 0.0 {
                        sign = d.signum();
                    } else if d.signum() != sign {
                        return fail("orientation coherent", format!("{} -> {}: Jacobian sign flips", chart.id, target.id));
                    }
                    let xs = self.field_at(c, &p)?;
                    let xt = self.field_at(t.target, &q)?;
                    for i in 0..n {
                        let pushed: f64 = (0..n).map(|j| jac[i * n + j] * xs[j]).sum();
                        let e = (pushed - xt[i]).abs() / (1.0 + xt[i].abs());
                        report.worst_field_mismatch = report.worst_field_mismatch.max(e);
                        if e > 1e-9 {
                            return fail("vector field transforms", format!("{} -> {} at {p:?}: {e:e}", chart.id, target.id));
                        }
                    }
                    let (fs, ft) = (self.f_at(c, &p)?, self.f_at(t.target, &q)?);
                    let e = (fs - ft).abs() / (1.0 + ft.abs());
                    report.worst_lyapunov_mismatch = report.worst_lyapunov_mismatch.max(e);
                    if e > 1e-9 {
                        return fail("lyapunov agrees", format!("{} -> {} at {p:?}: {e:e}", chart.id, target.id));
                    }
                    for w in &self.forms {
                        let e = pullback_mismatch(w, c, &p, t.target, &q, &jac, n)?;
                        report.worst_form_mismatch = report.worst_form_mismatch.max(e);
                        if e > 1e-9 {
                            return fail("form pullback", format!("`{}` {} -> {} at {p:?}: {e:e}", w.name, chart.id, target.id));
                        }
                    }
                    for g in &self.functions {
                        let (a, b) = (g.per_chart[c].eval(&p)?, g.per_chart[t.target].eval(&q)?);
                        if (a - b).abs() > 1e-9 * (1.0 + b.abs()) {
                            return fail("function agrees", format!("`{}` at {p:?}", g.name));
                        }
                    }
                }
                if found == 0 {
                    return fail("overlap sampled", format!("no overlap points for {} -> {}", chart.id, target.id));
                }
                report.overlap_points += found;
            }
        }
        Ok(report)
    }
}

fn pullback_mismatch(
    w: &DifferentialForm,
    c: usize,
    p: &[f64],
    target: usize,
    q: &[f64],
    jac: &[f64],
    n: usize,
) -> Result<f64, EvalError> {
    let src = w.coeffs(c, p)?;
    let dst = w.coeffs(target, q)?;
    let idx = multi_indices(n, w.degree);
    let mut worst = 0.0f64;
    for (a, i) in idx.iter().enumerate() {
        // coefficient of dt_I after pulling back: sum_J a_J det(Dphi[J, I])
        let pulled: f64 = idx
            .iter()
            .zip(&dst)
            .map(|(j, aj)| {
                let m: Vec<f64> = j.iter().flat_map(|&r| i.iter().map(move |&s| jac[r * n + s])).collect();
                aj * linalg::det(&m, w.degree)
            })
            .sum();
        worst = worst.max((pulled - src[a]).abs() / (1.0 + src[a].abs()));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub overlap_points: usize,
    pub worst_roundtrip: f64,
    pub worst_field_mismatch: f64,
    pub worst_lyapunov_mismatch: f64,
    pub worst_form_mismatch: f64,
    pub min_metric_eigenvalue: f64,
}

impl Default for ConsistencyReport {
    fn default() -> Self {
        ConsistencyReport {
            overlap_points: 0,
            worst_roundtrip: 0.0,
            worst_field_mismatch: 0.0,
            worst_lyapunov_mismatch: 0.0,
            worst_form_mismatch: 0.0,
            min_metric_eigenvalue: f64::INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbolic_inverse_of_general_metric() {
        let m: Vec<Expr> = ["2", "t1", "t1", "3"].iter().map(|s| crate::expr::parse(s).unwrap()).collect();
        let inv = symbolic_inverse(&m, 2);
        let t = [0.5];
        let vals: Vec<f64> = inv.iter().map(|e| e.eval(&t).unwrap()).collect();
        let det = 6.0 - 0.25;
        let want = [3.0 / det, -0.5 / det, -0.5 / det, 2.0 / det];
        for (a, b) in vals.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
