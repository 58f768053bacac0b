//! Connecting trajectories: instantons of index gap one with their signs,
//! sweeps of two-dimensional unstable sets, moduli samples, corner strata
//! and basin coverage.

mod basins;
mod corners;
mod sweep;

pub use basins::{basin_partition, classify_point, BasinReport, PairFraction};
pub use corners::{corner_catalog, greater_relation, CornerFamily, CornerRoot, CornerStratum, Relation};
pub use sweep::{sample_moduli, sweep_unstable_circle, Fiber, FiberSet, LaunchCurve, ModuliChart, ModuliSample, Patch, Separatrix, UnstableSweep};

use serde::Serialize;
use thiserror::Error;

use crate::critical::{disk_point, CriticalError, Orientations, RestPoint};
use crate::expr::EvalError;
use crate::flow::{Direction, FlowConfig, FlowError, StopRule, Terminal, TraceOptions, Tracer, Trajectory};
use crate::linalg;
use crate::quadrature::gauss_legendre;
use crate::scenario::{contract, ChartPoint, DifferentialForm, Scenario};

#[derive(Debug, Error)]
pub enum ModuliError {
    #[error("index gap from rest point {from} to {to} is {gap}, expected 1")]
    NotGapOne { from: usize, to: usize, gap: isize },
    #[error("trajectory from rest point {from} did not settle: {detail}")]
    Unresolved { from: usize, detail: String },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("sweep around rest point {x}: {detail}")]
    SweepResolution { x: usize, detail: String },
    #[error("no instanton enumeration for the gap-one pair ({0}, {1})")]
    MissingPair(usize, usize),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Critical(#[from] CriticalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy)]
pub struct ModuliConfig {
    pub flow: FlowConfig,
    /// Seed offset for shooting along one-dimensional branches.
    pub shoot_radius: f64,
    /// Radius of the circle swept around index-two points.
    pub sweep_radius: f64,
    pub sweep_seeds: usize,
    /// Bisection stops when the launch-angle bracket is this narrow.
    pub bisection_tol: f64,
    /// A separatrix lands on a saddle when it passes within this distance.
    pub landing_distance: f64,
    /// Instantons whose mid-level points are closer than this are identified.
    pub dedup_distance: f64,
    /// Closest approaches within this chart distance enter sweep signatures.
    pub proximity: f64,
}

impl Default for ModuliConfig {
    fn default() -> Self {
        ModuliConfig {
            flow: FlowConfig::default(),
            shoot_radius: 1e-6,
            sweep_radius: 1e-3,
            sweep_seeds: 2048,
            bisection_tol: 1e-10,
            landing_distance: 1e-6,
            dedup_distance: 1e-4,
            proximity: 0.1,
        }
    }
}

/// How an instanton was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Launch {
    /// Forward from a one-dimensional unstable branch of `from`.
    Forward,
    /// Backward from a one-dimensional stable branch of `to`.
    Backward,
    /// Separatrix of the unstable circle of `from`.
    Sweep,
}

/// Straight chart segment from `a` to `b`.
#[derive(Debug, Clone)]
pub struct Piece {
    pub chart: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Piece {
    /// `∫ ω` along the segment for a 1-form `ω`.
    pub fn integral(&self, s: &Scenario, form: &DifferentialForm) -> Result<f64, EvalError> {
        let n = s.dim;
        let d = s.charts[self.chart].diff(&self.b, &self.a);
        let (x, w) = gauss_legendre(4);
        let mut c = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut total = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            for i in 0..n {
                p[i] = self.a[i] + xi * d[i];
            }
            form.coeffs_into(self.chart, &p, &mut c)?;
            total += wi * contract(n, 1, &c, &[&d]);
        }
        Ok(total)
    }
}

/// A trajectory between two rest points with the straight pieces joining
/// its ends to them, oriented by the flow.
#[derive(Debug, Clone)]
pub struct FlowLine {
    pub traj: Trajectory,
    pub head: Piece,
    pub tail: Piece,
}

impl FlowLine {
    /// Line integral of a 1-form in the direction of the flow.
    pub fn integral(&self, s: &Scenario, form: &DifferentialForm, order: usize) -> Result<f64, EvalError> {
        let n = s.dim;
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let body = self.traj.integrate(order, |chart, state| {
            let p = &state[..n];
            s.field_into(chart, p, &mut x)?;
            form.coeffs_into(chart, p, &mut c)?;
            Ok(contract(n, 1, &c, &[&x]))
        })?;
        Ok(self.head.integral(s, form)? + body + self.tail.integral(s, form)?)
    }
}

#[derive(Debug, Clone)]
pub struct Instanton {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub sign: i8,
    /// Determinant of the frame comparison at arrival; small values flag
    /// a nearly degenerate transversality.
    pub determinant: f64,
    pub launch: Launch,
    /// Unit departure direction from `from`, in its unstable frame coordinates.
    pub departure: Vec<f64>,
    pub mid_point: ChartPoint,
    pub line: FlowLine,
    /// Branch sign or sweep angle that reproduces the launch.
    pub seed_parameter: f64,
}

impl Instanton {
    pub fn degenerate(&self) -> bool {
        self.determinant.abs() < 1e-8
    }
}

/// Rest-point coordinates of `rp` in `chart`.
fn rest_in(s: &Scenario, rp: &RestPoint, chart: usize) -> Option<Vec<f64>> {
    s.point_in(&rp.point, chart)
}

/// Vectors at `rp` (its chart) pushed into `chart`.
fn frame_in(s: &Scenario, rp: &RestPoint, frame: &[Vec<f64>], chart: usize) -> Option<Vec<Vec<f64>>> {
    let n = s.dim;
    let (_, j) = s.convert_with_jacobian(rp.point.chart, &rp.point.coords, chart)?;
    Some(frame.iter().map(|v| (0..n).map(|i| linalg::dot(&j[i * n..(i + 1) * n], v)).collect()).collect())
}

fn unit(v: &[f64]) -> Vec<f64> {
    let l = linalg::norm(v);
    v.iter().map(|c| c / l).collect()
}

fn trace_opts(anchor: usize) -> TraceOptions {
    TraceOptions { anchor: Some(anchor), orthonormalize: true, deep_sinks: true, ..TraceOptions::default() }
}

/// Joins a traced trajectory to its two rest points, oriented by the flow.
fn flow_line(s: &Scenario, traj: Trajectory, from: &RestPoint, to: &RestPoint) -> Option<FlowLine> {
    let start = traj.start_point();
    let end = traj.end_point();
    let (first, last, a, b) = match traj.direction {
        Direction::Forward => (from, to, start, end),
        Direction::Backward => (from, to, end, start),
    };
    let head = Piece { chart: a.chart, a: rest_in(s, first, a.chart)?, b: a.coords };
    let tail = Piece { chart: b.chart, a: b.coords, b: rest_in(s, last, b.chart)? };
    Some(FlowLine { traj, head, tail })
}

/// `det C` for `V = [X̂, U_y] C`, with `V` the transported frame of `x` at
/// the end of a forward trajectory and `U_y` the oriented frame of `y`;
/// multiplied by the point orientation when `y` has index zero.
fn arrival_determinant(s: &Scenario, traj: &Trajectory, y: &RestPoint, orient: &Orientations) -> Result<f64, ModuliError> {
    let chart = traj.final_chart;
    let p = &traj.final_state[..s.dim];
    let xhat = unit(&s.field_at(chart, p)?);
    let uy = frame_in(s, y, &orient.frame(y), chart)
        .ok_or_else(|| ModuliError::Unresolved { from: y.id, detail: "arrival chart does not contain the target".into() })?;
    let v = traj.final_tangents();
    let basis: Vec<&[f64]> = std::iter::once(xhat.as_slice()).chain(uy.iter().map(Vec::as_slice)).collect();
    let cols: Vec<&[f64]> = v.iter().map(Vec::as_slice).collect();
    let c = linalg::least_squares(&basis, &cols, s.dim)
        .ok_or_else(|| ModuliError::Unresolved { from: y.id, detail: "singular arrival frame".into() })?;
    let det = c.determinant();
    Ok(if y.index == 0 { det * orient.sign(y.id) } else { det })
}

/// Ambient shortcut when `x` has full index: the flow preserves orientation,
/// so only chart transitions and the arrival basis enter.
fn ambient_determinant(
    s: &Scenario,
    traj: &Trajectory,
    x: &RestPoint,
    y: &RestPoint,
    orient: &Orientations,
) -> Result<f64, ModuliError> {
    let n = s.dim;
    let start = traj.start_point();
    let xhat = unit(&s.field_at(start.chart, &start.coords)?);
    let uy = frame_in(s, y, &orient.frame(y), start.chart)
        .ok_or_else(|| ModuliError::Unresolved { from: y.id, detail: "seed chart does not contain the target".into() })?;
    let arrival: Vec<&[f64]> = std::iter::once(xhat.as_slice()).chain(uy.iter().map(Vec::as_slice)).collect();
    let ex = frame_in(s, x, &orient.frame(x), traj.final_chart)
        .ok_or_else(|| ModuliError::Unresolved { from: x.id, detail: "final chart does not contain the source".into() })?;
    let ex: Vec<&[f64]> = ex.iter().map(Vec::as_slice).collect();
    let d_arr = linalg::from_columns(&arrival, n).determinant();
    let d_x = linalg::from_columns(&ex, n).determinant();
    let det = d_arr * d_x.signum() * traj.orientation_sign;
    Ok(if y.index == 0 { det * orient.sign(y.id) } else { det })
}

fn departure_from(s: &Scenario, x: &RestPoint, point: &ChartPoint) -> Vec<f64> {
    let Some(q) = s.point_in(point, x.point.chart) else { return vec![] };
    let d = s.charts[x.point.chart].diff(&q, &x.point.coords);
    let fc = x.frame_coordinates(&d);
    unit(&fc[..x.index])
}

fn gap(x: &RestPoint, y: &RestPoint) -> isize {
    x.index as isize - y.index as isize
}

/// Instantons from `x` to `y` for an index gap of one.
pub fn enumerate_instantons(
    s: &Scenario,
    rest: &[RestPoint],
    orient: &Orientations,
    x: usize,
    y: usize,
    cfg: &ModuliConfig,
) -> Result<Vec<Instanton>, ModuliError> {
    let (rx, ry) = (&rest[x], &rest[y]);
    if gap(rx, ry) != 1 {
        return Err(ModuliError::NotGapOne { from: x, to: y, gap: gap(rx, ry) });
    }
    let tracer = Tracer::new(s, rest, cfg.flow);
    let mut found = Vec::new();
    if rx.index == 1 {
        for sigma in [1.0, -1.0] {
            let traj = shoot(&tracer, rx, orient, sigma, cfg)?;
            if traj.converged_to() == Some(y) {
                let det = arrival_determinant(s, &traj, ry, orient)?;
                found.push((Launch::Forward, sigma, det, traj));
            }
        }
    } else if s.dim - ry.index == 1 {
        for sigma in [1.0, -1.0] {
            let seed = disk_point_stable(ry, sigma, cfg.shoot_radius);
            let traj = tracer.trace(&seed, &[], Direction::Backward, StopRule::NearRestPoint, &trace_opts(y))?;
            match traj.converged_to() {
                Some(k) if k == x => {
                    let det = ambient_determinant(s, &traj, rx, ry, orient)?;
                    found.push((Launch::Backward, sigma, det, traj));
                }
                Some(_) => {}
                None => {
                    return Err(ModuliError::Unresolved { from: y, detail: format!("backward branch ended with {:?}", traj.terminal) })
                }
            }
        }
    } else if rx.index == 2 {
        let sweep = sweep_unstable_circle(s, &tracer, rx, cfg)?;
        for sep in sweep.separatrices.iter().filter(|p| p.to == y) {
            let (det, traj) = sweep_transport(s, &tracer, rx, ry, orient, &sweep.curve, sep.angle, cfg)?;
            found.push((Launch::Sweep, sep.angle, det, traj));
        }
    } else {
        return Err(ModuliError::Unsupported(format!(
            "instantons from index {} to index {} in dimension {}",
            rx.index, ry.index, s.dim
        )));
    }

    let mid = 0.5 * (rx.f + ry.f);
    let mut out: Vec<Instanton> = Vec::new();
    for (launch, param, det, traj) in found {
        let mid_point = traj.level_crossing(s, mid)?;
        if out.iter().any(|o| s.distance(&o.mid_point, &mid_point) < cfg.dedup_distance) {
            continue;
        }
        let departure = match launch {
            Launch::Backward => departure_from(s, rx, &traj.end_point()),
            _ => departure_from(s, rx, &traj.start_point()),
        };
        let line = flow_line(s, traj, rx, ry)
            .ok_or_else(|| ModuliError::Unresolved { from: x, detail: "end chart does not contain the rest point".into() })?;
        out.push(Instanton {
            id: 0,
            from: x,
            to: y,
            sign: if det >= 0.0 { 1 } else { -1 },
            determinant: det,
            launch,
            departure,
            mid_point,
            line,
            seed_parameter: param,
        });
    }
    Ok(out)
}

fn disk_point_stable(y: &RestPoint, sigma: f64, rho: f64) -> ChartPoint {
    disk_point(y, &y.stable_frame[..1], rho, &[sigma])
}

/// Forward trace from `x ± rho e` with the oriented frame vector as tangent.
fn shoot(
    tracer: &Tracer,
    x: &RestPoint,
    orient: &Orientations,
    sigma: f64,
    cfg: &ModuliConfig,
) -> Result<Trajectory, ModuliError> {
    let seed = disk_point(x, &x.unstable_frame, cfg.shoot_radius, &[sigma]);
    let tangent = orient.frame(x);
    let traj = tracer.trace(&seed, &tangent, Direction::Forward, StopRule::NearRestPoint, &trace_opts(x.id))?;
    if traj.converged_to().is_none() {
        return Err(ModuliError::Unresolved { from: x.id, detail: format!("forward branch ended with {:?}", traj.terminal) });
    }
    Ok(traj)
}

/// Transport of the oriented 2-frame of `x` along the separatrix at `angle`,
/// compared with the frame of `y` where the trace crosses the level of `y`
/// (the separatrix passes `y` within the landing distance there).
#[allow(clippy::too_many_arguments)]
fn sweep_transport(
    s: &Scenario,
    tracer: &Tracer,
    x: &RestPoint,
    y: &RestPoint,
    orient: &Orientations,
    curve: &LaunchCurve,
    angle: f64,
    cfg: &ModuliConfig,
) -> Result<(f64, Trajectory), ModuliError> {
    let seed = curve.point(x, angle);
    let traj = tracer.trace(&seed, &orient.frame(x), Direction::Forward, StopRule::Level(y.f), &trace_opts(x.id))?;
    let near = s.distance(&traj.end_point(), &y.point) < cfg.landing_distance;
    if traj.converged_to() != Some(y.id) && !(traj.terminal == Terminal::ReachedLevel && near) {
        return Err(ModuliError::SweepResolution {
            x: x.id,
            detail: format!("separatrix at angle {angle} ended with {:?}", traj.terminal),
        });
    }
    Ok((arrival_determinant(s, &traj, y, orient)?, traj))
}

/// Sign of an instanton under the orientation choice `orient`, recomputed
/// by transporting frames along a fresh trace.
pub fn instanton_sign(
    s: &Scenario,
    rest: &[RestPoint],
    inst: &Instanton,
    orient: &Orientations,
    cfg: &ModuliConfig,
) -> Result<(i8, f64), ModuliError> {
    let tracer = Tracer::new(s, rest, cfg.flow);
    let (rx, ry) = (&rest[inst.from], &rest[inst.to]);
    let det = match inst.launch {
        Launch::Forward => {
            let traj = shoot(&tracer, rx, orient, inst.seed_parameter, cfg)?;
            arrival_determinant(s, &traj, ry, orient)?
        }
        Launch::Backward => ambient_determinant(s, &inst.line.traj, rx, ry, orient)?,
        Launch::Sweep => {
            let curve = LaunchCurve::new(rx, cfg.sweep_radius)?;
            sweep_transport(s, &tracer, rx, ry, orient, &curve, inst.seed_parameter, cfg)?.0
        }
    };
    Ok((if det >= 0.0 { 1 } else { -1 }, det))
}

/// Every gap-one pair `(x, y)` in a deterministic order.
pub fn gap_one_pairs(rest: &[RestPoint]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for x in rest {
        for y in rest {
            if gap(x, y) == 1 {
                pairs.push((x.id, y.id));
            }
        }
    }
    pairs
}

/// The two one-dimensional unstable branches of an index-one point, oriented
/// by the flow; the first leaves along `+e`, the second along `-e`, with `e`
/// the canonical unstable vector.
#[derive(Debug, Clone)]
pub struct Branches {
    pub x: usize,
    pub plus: FlowLine,
    pub minus: FlowLine,
    pub plus_end: usize,
    pub minus_end: usize,
}

/// Everything the integration maps need: rest points, orientations,
/// instantons of every gap-one pair, unstable branches and sweeps.
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub rest: Vec<RestPoint>,
    pub orientations: Orientations,
    pub instantons: Vec<Instanton>,
    /// Gap-one pairs whose enumeration ran (possibly with no instantons).
    pub enumerated: Vec<(usize, usize)>,
    pub branches: Vec<Branches>,
    pub sweeps: Vec<UnstableSweep>,
    pub cfg: ModuliConfig,
}

impl Skeleton {
    pub fn build(s: &Scenario, rest: Vec<RestPoint>, orientations: Orientations, cfg: ModuliConfig) -> Result<Skeleton, ModuliError> {
        let pairs = gap_one_pairs(&rest);
        let mut instantons = Vec::new();
        for &(x, y) in &pairs {
            instantons.extend(enumerate_instantons(s, &rest, &orientations, x, y, &cfg)?);
        }
        for (k, inst) in instantons.iter_mut().enumerate() {
            inst.id = k;
        }
        let tracer = Tracer::new(s, &rest, cfg.flow);
        let mut branches = Vec::new();
        let mut sweeps = Vec::new();
        for rp in &rest {
            match rp.index {
                1 => branches.push(unstable_branches(s, &tracer, &rest, rp, &cfg)?),
                2 if s.dim == 2 => sweeps.push(sweep_unstable_circle(s, &tracer, rp, &cfg)?),
                _ => {}
            }
        }
        Ok(Skeleton { rest, orientations, instantons, enumerated: pairs, branches, sweeps, cfg })
    }

    /// Same skeleton with signs recomputed for another orientation choice.
    pub fn reoriented(&self, s: &Scenario, orientations: Orientations) -> Result<Skeleton, ModuliError> {
        let mut out = self.clone();
        for inst in &mut out.instantons {
            let (sign, det) = instanton_sign(s, &self.rest, inst, &orientations, &self.cfg)?;
            inst.sign = sign;
            inst.determinant = det;
        }
        out.orientations = orientations;
        Ok(out)
    }

    pub fn between(&self, x: usize, y: usize) -> impl Iterator<Item = &Instanton> {
        self.instantons.iter().filter(move |i| i.from == x && i.to == y)
    }

    /// `Σ ε(γ)` over the instantons from `x` to `y`.
    pub fn incidence(&self, x: usize, y: usize) -> i64 {
        self.between(x, y).map(|i| i64::from(i.sign)).sum()
    }

    pub fn sweep_of(&self, x: usize) -> Option<&UnstableSweep> {
        self.sweeps.iter().find(|w| w.x == x)
    }

    pub fn branches_of(&self, x: usize) -> Option<&Branches> {
        self.branches.iter().find(|b| b.x == x)
    }

    pub fn of_index(&self, r: usize) -> Vec<usize> {
        self.rest.iter().filter(|p| p.index == r).map(|p| p.id).collect()
    }
}

fn unstable_branches(
    s: &Scenario,
    tracer: &Tracer,
    rest: &[RestPoint],
    x: &RestPoint,
    cfg: &ModuliConfig,
) -> Result<Branches, ModuliError> {
    let mut lines = Vec::new();
    for sigma in [1.0, -1.0] {
        let seed = disk_point(x, &x.unstable_frame, cfg.shoot_radius, &[sigma]);
        let traj = tracer.trace(&seed, &[], Direction::Forward, StopRule::NearRestPoint, &trace_opts(x.id))?;
        let end = traj.converged_to().ok_or_else(|| ModuliError::Unresolved {
            from: x.id,
            detail: format!("unstable branch ended with {:?}", traj.terminal),
        })?;
        let line = flow_line(s, traj, x, &rest[end])
            .ok_or_else(|| ModuliError::Unresolved { from: x.id, detail: "branch end outside the target chart".into() })?;
        lines.push((line, end));
    }
    let (minus, minus_end) = lines.pop().expect("two branches");
    let (plus, plus_end) = lines.pop().expect("two branches");
    Ok(Branches { x: x.id, plus, minus, plus_end, minus_end })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::{choose_orientations, find_rest_points, SearchConfig};
    use crate::scenario::builtin;

    fn setup(name: &str) -> (Scenario, Vec<RestPoint>) {
        let s = builtin(name).unwrap();
        let r = find_rest_points(&s, &SearchConfig::default()).unwrap();
        (s, r)
    }

    fn id_at(s: &Scenario, r: &[RestPoint], chart: &str, coords: &[f64]) -> usize {
        let c = s.chart_index(chart).unwrap();
        let p = ChartPoint::new(c, coords.to_vec());
        r.iter().find(|q| s.distance(&q.point, &p) < 1e-8).unwrap().id
    }

    #[test]
    fn circle_instantons_cancel() {
        let (s, r) = setup("circle_cos");
        let o = choose_orientations(&r);
        let (max, min) = (id_at(&s, &r, "T", &[0.0]), id_at(&s, &r, "T", &[0.5]));
        let inst = enumerate_instantons(&s, &r, &o, max, min, &ModuliConfig::default()).unwrap();
        assert_eq!(inst.len(), 2);
        assert_eq!(inst.iter().map(|i| i64::from(i.sign)).sum::<i64>(), 0);
        for i in &inst {
            assert!((i.mid_point.coords[0] - 0.25).abs() < 1e-9 || (i.mid_point.coords[0] - 0.75).abs() < 1e-9);
        }
    }

    #[test]
    fn double_well_incidences() {
        let (s, r) = setup("double_well_circle");
        let o = choose_orientations(&r);
        let sk = Skeleton::build(&s, r, o, ModuliConfig::default()).unwrap();
        let max0 = id_at(&s, &sk.rest, "T", &[0.0]);
        let a = id_at(&s, &sk.rest, "T", &[0.25]);
        let b = id_at(&s, &sk.rest, "T", &[0.75]);
        assert_eq!(sk.incidence(max0, a), 1);
        assert_eq!(sk.incidence(max0, b), -1);
        let flipped = sk.reoriented(&s, sk.orientations.flipped(a)).unwrap();
        assert_eq!(flipped.incidence(max0, a), -1);
        assert_eq!(flipped.incidence(max0, b), -1);
    }

    #[test]
    fn torus_counts_and_axes() {
        let (s, r) = setup("flat_torus");
        let o = choose_orientations(&r);
        let cfg = ModuliConfig::default();
        let max = id_at(&s, &r, "T", &[0.0, 0.0]);
        let sad = id_at(&s, &r, "T", &[0.5, 0.0]);
        let min = id_at(&s, &r, "T", &[0.5, 0.5]);
        let a = enumerate_instantons(&s, &r, &o, max, sad, &cfg).unwrap();
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|i| i.mid_point.coords[1] == 0.0));
        assert_eq!(a.iter().map(|i| i64::from(i.sign)).sum::<i64>(), 0);
        let b = enumerate_instantons(&s, &r, &o, sad, min, &cfg).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|i| (i.mid_point.coords[0] - 0.5).abs() < 1e-12));
        assert!(matches!(enumerate_instantons(&s, &r, &o, max, min, &cfg), Err(ModuliError::NotGapOne { .. })));
    }

    #[test]
    fn ellipsoid_quarter_arc() {
        let (s, r) = setup("ellipsoid_sphere");
        let o = choose_orientations(&r);
        let north = id_at(&s, &r, "N", &[0.0, 0.0]);
        let sad = id_at(&s, &r, "S", &[0.0, 1.0]);
        let inst = enumerate_instantons(&s, &r, &o, north, sad, &ModuliConfig::default()).unwrap();
        assert_eq!(inst.len(), 1);
        // mid-level point has x = 0, y > 0, z > 0
        let p = &inst[0].mid_point;
        let emb = |k: usize| s.functions[k].per_chart[p.chart].eval(&p.coords).unwrap();
        assert!(emb(0).abs() < 1e-6 && emb(1) > 0.0 && emb(2) > 0.0);
    }

    #[test]
    fn sweep_agrees_with_shooting() {
        for name in ["flat_torus", "ellipsoid_sphere"] {
            let (s, r) = setup(name);
            let o = choose_orientations(&r);
            let cfg = ModuliConfig { sweep_seeds: 256, ..ModuliConfig::default() };
            let tracer = Tracer::new(&s, &r, cfg.flow);
            for x in r.iter().filter(|p| p.index == 2) {
                let sweep = sweep_unstable_circle(&s, &tracer, x, &cfg).unwrap();
                for y in r.iter().filter(|p| p.index == 1) {
                    let shot = enumerate_instantons(&s, &r, &o, x.id, y.id, &cfg).unwrap();
                    let swept: Vec<_> = sweep.separatrices.iter().filter(|p| p.to == y.id).collect();
                    assert_eq!(shot.len(), swept.len(), "{name}");
                    for sep in swept {
                        let (det, _) = sweep_transport(&s, &tracer, x, y, &o, &sweep.curve, sep.angle, &cfg).unwrap();
                        let d = [sep.angle.cos(), sep.angle.sin()];
                        let m = shot.iter().find(|i| linalg::dot(&i.departure, &d) > 0.999).unwrap();
                        assert_eq!(m.sign, if det >= 0.0 { 1 } else { -1 }, "{name}");
                    }
                }
            }
        }
    }
}
