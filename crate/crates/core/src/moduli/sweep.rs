//! Sweeps of the unstable circle of index-two points: separatrix angles,
//! launch patches, fiber families for integration and moduli samples.

use rayon::prelude::*;
use serde::Serialize;

use super::{unit, ModuliConfig, ModuliError, Skeleton};
use crate::critical::{disk_point, RestPoint};
use crate::expr::EvalError;
use crate::flow::{Direction, StopRule, TraceOptions, Tracer, Trajectory};
use crate::linalg;
use crate::quadrature::{gauss_legendre, geometric_rule};
use crate::scenario::{ChartPoint, DifferentialForm, Scenario};

/// Launch angle (canonical unstable frame coordinates) whose trajectory
/// ends at the saddle `to`.
#[derive(Debug, Clone, Serialize)]
pub struct Separatrix {
    pub angle: f64,
    pub to: usize,
}

/// Open arc of launch angles whose trajectories all end at `to`.
#[derive(Debug, Clone, Serialize)]
pub struct Patch {
    pub start: f64,
    pub end: f64,
    pub to: usize,
}

/// Launch curve `θ ↦ x + E exp(B t0) c(θ)`: the image of the unit circle
/// under the linear flow, scaled so its slow semi-axis is about `rho`.
/// Unlike a round circle it does not squeeze the generic trajectories of a
/// node with unequal rates into a thin band of angles.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LaunchCurve {
    /// Matrix of `DX` on the unstable frame, row-major 2×2.
    pub b: [f64; 4],
    pub t0: f64,
    /// `exp(B t0)`.
    pub m: [f64; 4],
}

impl LaunchCurve {
    pub fn new(x: &RestPoint, rho: f64) -> Result<LaunchCurve, ModuliError> {
        let n = x.dim();
        let frame = &x.unstable_frame;
        let ae: Vec<Vec<f64>> = frame
            .iter()
            .map(|v| (0..n).map(|i| linalg::dot(&x.jacobian[i * n..(i + 1) * n], v)).collect())
            .collect();
        let cols: Vec<&[f64]> = frame.iter().map(Vec::as_slice).collect();
        let rhs: Vec<&[f64]> = ae.iter().map(Vec::as_slice).collect();
        let bm = linalg::least_squares(&cols, &rhs, n)
            .ok_or_else(|| ModuliError::SweepResolution { x: x.id, detail: "singular unstable frame".into() })?;
        let b = [bm[(0, 0)], bm[(0, 1)], bm[(1, 0)], bm[(1, 1)]];
        let tau = 0.5 * (b[0] + b[3]);
        let disc = tau * tau - (b[0] * b[3] - b[1] * b[2]);
        let slow = if disc > 0.0 { tau - disc.sqrt() } else { tau };
        if slow <= 0.0 {
            return Err(ModuliError::SweepResolution { x: x.id, detail: format!("unstable rates not positive ({slow})") });
        }
        let t0 = rho.ln() / slow;
        Ok(LaunchCurve { b, t0, m: expm2(&b, t0) })
    }

    fn frame_vector(&self, angle: f64, derivative: bool) -> [f64; 2] {
        let (c, s) = (angle.cos(), angle.sin());
        let v = if derivative { [-s, c] } else { [c, s] };
        [self.m[0] * v[0] + self.m[1] * v[1], self.m[2] * v[0] + self.m[3] * v[1]]
    }

    pub fn point(&self, x: &RestPoint, angle: f64) -> ChartPoint {
        disk_point(x, &x.unstable_frame, 1.0, &self.frame_vector(angle, false))
    }

    /// `∂θ` of [`LaunchCurve::point`].
    pub fn tangent(&self, x: &RestPoint, angle: f64) -> Vec<f64> {
        let v = self.frame_vector(angle, true);
        let e = &x.unstable_frame;
        (0..x.dim()).map(|i| v[0] * e[0][i] + v[1] * e[1][i]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct UnstableSweep {
    pub x: usize,
    pub rho: f64,
    pub curve: LaunchCurve,
    pub seeds: usize,
    pub separatrices: Vec<Separatrix>,
    pub patches: Vec<Patch>,
}

#[derive(Debug, Clone, PartialEq)]
struct Signature {
    dest: Option<usize>,
    /// Saddles passed nearby, with the side of their stable set.
    sides: Vec<(usize, bool)>,
    /// Closest saddle approach, used to detect landings.
    closest: Option<(usize, f64)>,
}

impl Signature {
    fn conflicts(&self, other: &Signature) -> bool {
        self.dest != other.dest
            || self.sides.iter().any(|(k, s)| other.sides.iter().any(|(k2, s2)| k == k2 && s != s2))
    }
}

fn signature(
    s: &Scenario,
    tracer: &Tracer,
    x: &RestPoint,
    curve: &LaunchCurve,
    angle: f64,
    cfg: &ModuliConfig,
) -> Result<Signature, ModuliError> {
    let opts = TraceOptions { anchor: Some(x.id), sinks_only: true, proximity: cfg.proximity, ..TraceOptions::default() };
    let traj = tracer.trace(&curve.point(x, angle), &[], Direction::Forward, StopRule::NearRestPoint, &opts)?;
    let saddles = traj.approaches.iter().filter(|a| {
        let k = tracer.rest[a.rest].index;
        a.rest != x.id && k > 0 && k < s.dim
    });
    let mut sides: Vec<(usize, bool)> = saddles.clone().map(|a| (a.rest, a.frame_coords[0] > 0.0)).collect();
    sides.sort_unstable();
    let closest = saddles.map(|a| (a.rest, a.distance)).min_by(|a, b| a.1.total_cmp(&b.1));
    Ok(Signature { dest: traj.converged_to(), sides, closest })
}

/// Sweeps `x`'s unstable circle of radius `cfg.sweep_radius` and locates the
/// separatrices by bisection between seeds with conflicting signatures.
pub fn sweep_unstable_circle(
    s: &Scenario,
    tracer: &Tracer,
    x: &RestPoint,
    cfg: &ModuliConfig,
) -> Result<UnstableSweep, ModuliError> {
    if x.index != 2 {
        return Err(ModuliError::Unsupported(format!("circle sweep around a point of index {}", x.index)));
    }
    let curve = LaunchCurve::new(x, cfg.sweep_radius)?;
    let m = cfg.sweep_seeds.max(8);
    let step = std::f64::consts::TAU / m as f64;
    // half-step offset keeps seeds off axis-aligned separatrices
    let angles: Vec<f64> = (0..m).map(|j| (j as f64 + 0.5) * step).collect();
    let sigs: Vec<Signature> =
        angles.par_iter().map(|&a| signature(s, tracer, x, &curve, a, cfg)).collect::<Result<_, _>>()?;
    if let Some(j) = sigs.iter().position(|g| g.dest.is_none()) {
        return Err(ModuliError::SweepResolution { x: x.id, detail: format!("seed at angle {} did not settle", angles[j]) });
    }
    let brackets: Vec<(f64, f64, usize)> =
        (0..m).filter(|&j| sigs[j].conflicts(&sigs[(j + 1) % m])).map(|j| (angles[j], angles[j] + step, j)).collect();
    let found: Vec<Separatrix> = brackets
        .par_iter()
        .map(|&(a, b, j)| bisect(s, tracer, x, &curve, a, b, sigs[j].clone(), cfg))
        .collect::<Result<_, _>>()?;
    let mut separatrices: Vec<Separatrix> = Vec::new();
    for mut sep in found {
        sep.angle = sep.angle.rem_euclid(std::f64::consts::TAU);
        if !separatrices.iter().any(|q| (q.angle - sep.angle).abs() < 1e-8) {
            separatrices.push(sep);
        }
    }
    separatrices.sort_by(|p, q| p.angle.total_cmp(&q.angle));

    let bounds: Vec<(f64, f64)> = if separatrices.is_empty() {
        vec![(0.0, std::f64::consts::TAU)]
    } else {
        let k = separatrices.len();
        (0..k)
            .map(|i| {
                let a = separatrices[i].angle;
                let b = if i + 1 < k { separatrices[i + 1].angle } else { separatrices[0].angle + std::f64::consts::TAU };
                (a, b)
            })
            .collect()
    };
    let mut patches = Vec::new();
    for (a, b) in bounds {
        let sig = signature(s, tracer, x, &curve, 0.5 * (a + b), cfg)?;
        let to = sig.dest.ok_or_else(|| ModuliError::SweepResolution {
            x: x.id,
            detail: format!("patch ({a}, {b}) has an unsettled midpoint"),
        })?;
        patches.push(Patch { start: a, end: b, to });
    }
    Ok(UnstableSweep { x: x.id, rho: cfg.sweep_radius, curve, seeds: m, separatrices, patches })
}

/// Bisection on the launch angle down to `cfg.bisection_tol`, continued
/// until the midpoint trajectory passes within the landing distance of a
/// saddle (approach distance scales like the square root of the offset).
#[allow(clippy::too_many_arguments)]
fn bisect(
    s: &Scenario,
    tracer: &Tracer,
    x: &RestPoint,
    curve: &LaunchCurve,
    mut a: f64,
    mut b: f64,
    sig_a: Signature,
    cfg: &ModuliConfig,
) -> Result<Separatrix, ModuliError> {
    loop {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return Err(ModuliError::SweepResolution {
                x: x.id,
                detail: format!("boundary near angle {mid} does not land on a saddle"),
            });
        }
        let sig = signature(s, tracer, x, curve, mid, cfg)?;
        let landed = sig.closest.filter(|c| c.1 < cfg.landing_distance).map(|c| c.0);
        if let Some(to) = landed {
            if sig.dest.is_none() || b - a <= cfg.bisection_tol {
                return Ok(Separatrix { angle: mid, to });
            }
        }
        if sig.dest.is_none() {
            return Err(ModuliError::SweepResolution { x: x.id, detail: format!("angle {mid} did not settle") });
        }
        if sig.conflicts(&sig_a) {
            b = mid;
        } else {
            a = mid;
        }
    }
}

/// One traced fiber of the unstable set at a quadrature angle.
#[derive(Debug, Clone)]
pub struct Fiber {
    pub patch: usize,
    pub angle: f64,
    pub weight: f64,
    /// State carries the angular tangent `∂θ` of the parametrization.
    pub traj: Trajectory,
}

/// Quadrature points of one fiber: positions and the weighted bivector
/// `X ∧ ∂θ` (or `e1 ∧ e2` inside the launch curve) in multi-index order.
#[derive(Debug, Clone)]
struct FiberNodes {
    charts: Vec<usize>,
    points: Vec<f64>,
    bivectors: Vec<f64>,
}

impl FiberNodes {
    fn push(&mut self, chart: usize, p: &[f64], u: &[f64], v: &[f64], w: f64) {
        let n = p.len();
        self.charts.push(chart);
        self.points.extend_from_slice(p);
        for i in 0..n {
            for j in i + 1..n {
                self.bivectors.push(w * (u[i] * v[j] - u[j] * v[i]));
            }
        }
    }
}

/// Quadrature family of fibers covering the unstable set of an index-two
/// point: graded Gauss rules on each launch patch, flow-time along each fiber
/// and the linear flow inside the launch curve. Quadrature points are
/// computed once, so each form costs only its coefficient evaluations.
#[derive(Debug, Clone)]
pub struct FiberSet {
    pub x: usize,
    pub order: usize,
    pub step_order: usize,
    pub fibers: Vec<Fiber>,
    nodes: Vec<FiberNodes>,
}

/// `exp(m t)` for a 2×2 row-major matrix.
fn expm2(m: &[f64; 4], t: f64) -> [f64; 4] {
    let tau = 0.5 * (m[0] + m[3]);
    let det = m[0] * m[3] - m[1] * m[2];
    let disc = tau * tau - det;
    let (c, sh) = if disc > 1e-14 {
        let q = disc.sqrt() * t;
        (q.cosh(), q.sinh() / disc.sqrt())
    } else if disc < -1e-14 {
        let q = (-disc).sqrt() * t;
        (q.cos(), q.sin() / (-disc).sqrt())
    } else {
        (1.0, t)
    };
    let e = (tau * t).exp();
    [
        e * (c + sh * (m[0] - tau)),
        e * sh * m[1],
        e * sh * m[2],
        e * (c + sh * (m[3] - tau)),
    ]
}

impl FiberSet {
    pub fn build(
        s: &Scenario,
        tracer: &Tracer,
        x: &RestPoint,
        sweep: &UnstableSweep,
        order: usize,
        step_order: usize,
        min_offset: f64,
    ) -> Result<FiberSet, ModuliError> {
        let curve = sweep.curve;
        let angles: Vec<(usize, f64, f64)> = sweep
            .patches
            .iter()
            .enumerate()
            .flat_map(|(k, p)| geometric_rule(p.start, p.end, order, min_offset).into_iter().map(move |(a, w)| (k, a, w)))
            .collect();
        let built = angles
            .par_iter()
            .map(|&(patch, angle, weight)| {
                let (seed, w0) = (curve.point(x, angle), curve.tangent(x, angle));
                let opts =
                    TraceOptions { anchor: Some(x.id), sinks_only: true, deep_sinks: true, ..TraceOptions::default() };
                let traj = tracer.trace(&seed, &[w0], Direction::Forward, StopRule::NearRestPoint, &opts)?;
                if traj.converged_to() != Some(sweep.patches[patch].to) {
                    return Err(ModuliError::SweepResolution {
                        x: x.id,
                        detail: format!("fiber at angle {angle} ended with {:?}", traj.terminal),
                    });
                }
                let mut nodes = FiberNodes { charts: Vec::new(), points: Vec::new(), bivectors: Vec::new() };
                outer_nodes(s, &traj, step_order, &mut nodes)?;
                inner_nodes(x, &curve, angle, order, &mut nodes);
                Ok((Fiber { patch, angle, weight, traj }, nodes))
            })
            .collect::<Result<Vec<_>, ModuliError>>()?;
        let (fibers, nodes) = built.into_iter().unzip();
        Ok(FiberSet { x: x.id, order, step_order, fibers, nodes })
    }

    /// `∫ ω(∂t, ∂θ)` over the fibers whose patch passes `keep`, for a 2-form
    /// `ω`; orientation from the canonical unstable frame.
    pub fn integrate(&self, form: &DifferentialForm, keep: impl Fn(usize) -> bool + Sync) -> Result<f64, EvalError> {
        let parts = self
            .fibers
            .par_iter()
            .zip(&self.nodes)
            .filter(|(f, _)| keep(f.patch))
            .map(|(f, nodes)| Ok(f.weight * fiber_value(form, nodes)?))
            .collect::<Result<Vec<f64>, EvalError>>()?;
        // fixed-order reduction keeps sums reproducible
        Ok(parts.iter().sum())
    }

    /// Per-fiber integrand values `(angle, value)` before weighting.
    pub fn profile(&self, form: &DifferentialForm) -> Result<Vec<(f64, f64)>, EvalError> {
        self.fibers.iter().zip(&self.nodes).map(|(f, nodes)| Ok((f.angle, fiber_value(form, nodes)?))).collect()
    }
}

fn fiber_value(form: &DifferentialForm, nodes: &FiberNodes) -> Result<f64, EvalError> {
    let nb = nodes.bivectors.len() / nodes.charts.len().max(1);
    let n = nodes.points.len() / nodes.charts.len().max(1);
    let mut c = vec![0.0; nb];
    let mut total = 0.0;
    for (k, &chart) in nodes.charts.iter().enumerate() {
        form.coeffs_into(chart, &nodes.points[k * n..(k + 1) * n], &mut c)?;
        total += c.iter().zip(&nodes.bivectors[k * nb..(k + 1) * nb]).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total)
}

/// Nodes along the traced fiber, in flow time.
fn outer_nodes(s: &Scenario, traj: &Trajectory, step_order: usize, out: &mut FiberNodes) -> Result<(), EvalError> {
    let n = s.dim;
    let mut x = vec![0.0; n];
    traj.for_each_node(step_order, |chart, state, w| {
        let p = &state[..n];
        s.field_into(chart, p, &mut x)?;
        out.push(chart, p, &x, &state[n..2 * n], w);
        Ok(())
    })
}

/// Nodes inside the launch curve along the linear flow
/// `x + E exp(B t) c(θ)`, `t < t0`, in the variable `u = exp(tr(B) (t - t0))`.
fn inner_nodes(x: &RestPoint, curve: &LaunchCurve, angle: f64, order: usize, out: &mut FiberNodes) {
    let n = x.dim();
    let b = &curve.b;
    let t0 = curve.t0;
    let tr = b[0] + b[3];
    let (cs, sn) = (angle.cos(), angle.sin());
    let cbc = cs * (b[0] * cs + b[1] * sn) + sn * (b[2] * cs + b[3] * sn);
    let scale = (tr * t0).exp() * cbc / tr;
    let (e1, e2) = (&x.unstable_frame[0], &x.unstable_frame[1]);
    let (nodes, weights) = gauss_legendre(order);
    let center = &x.point;
    for (u, w) in nodes.iter().zip(&weights) {
        let m = expm2(b, t0 + u.ln() / tr);
        let v = [m[0] * cs + m[1] * sn, m[2] * cs + m[3] * sn];
        let p: Vec<f64> = (0..n).map(|i| center.coords[i] + v[0] * e1[i] + v[1] * e2[i]).collect();
        out.push(center.chart, &p, e1, e2, w * scale);
    }
}

/// A sampled point of `M(x, y)` with the oriented tangent frame there.
#[derive(Debug, Clone, Serialize)]
pub struct ModuliSample {
    /// Instanton id (gap one) or patch index (gap two).
    pub component: usize,
    /// Launch angle for gap two, zero otherwise.
    pub angle: f64,
    pub level: f64,
    pub point: ChartPoint,
    pub frame: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModuliChart {
    pub from: usize,
    pub to: usize,
    pub gap: isize,
    pub components: usize,
    pub samples: Vec<ModuliSample>,
}

/// Grid of `resolution` fibers per component times `resolution` levels.
pub fn sample_moduli(
    s: &Scenario,
    sk: &Skeleton,
    x: usize,
    y: usize,
    resolution: usize,
) -> Result<ModuliChart, ModuliError> {
    let (rx, ry) = (&sk.rest[x], &sk.rest[y]);
    let gap = rx.index as isize - ry.index as isize;
    let mut chart = ModuliChart { from: x, to: y, gap, components: 0, samples: Vec::new() };
    if gap < 1 || rx.f <= ry.f {
        return Ok(chart);
    }
    let levels: Vec<f64> =
        (0..resolution).map(|k| ry.f + (rx.f - ry.f) * (k as f64 + 0.5) / resolution as f64).collect();
    match gap {
        1 => {
            let inst: Vec<_> = sk.between(x, y).collect();
            chart.components = inst.len();
            for i in inst {
                for &c in &levels {
                    let (ch, state) = i.line.traj.level_state(s, c)?;
                    let xhat = unit(&s.field_at(ch, &state[..s.dim])?);
                    let frame = vec![xhat.iter().map(|v| v * f64::from(i.sign)).collect()];
                    chart.samples.push(ModuliSample {
                        component: i.id,
                        angle: 0.0,
                        level: c,
                        point: ChartPoint::new(ch, state[..s.dim].to_vec()),
                        frame,
                    });
                }
            }
        }
        2 if s.dim == 2 => {
            let sweep = sk.sweep_of(x).ok_or(ModuliError::MissingPair(x, y))?;
            let tracer = Tracer::new(s, &sk.rest, sk.cfg.flow);
            let sign = sk.orientations.sign(x) * sk.orientations.sign(y);
            for (k, p) in sweep.patches.iter().enumerate().filter(|(_, p)| p.to == y) {
                chart.components += 1;
                for j in 0..resolution {
                    let angle = p.start + (p.end - p.start) * (j as f64 + 0.5) / resolution as f64;
                    let n = s.dim;
                    let w0 = sweep.curve.tangent(rx, angle);
                    let opts = TraceOptions { anchor: Some(x), sinks_only: true, ..TraceOptions::default() };
                    let traj = tracer.trace(&sweep.curve.point(rx, angle), &[w0], Direction::Forward, StopRule::NearRestPoint, &opts)?;
                    for &c in &levels {
                        let (ch, state) = traj.level_state(s, c)?;
                        let xhat = unit(&s.field_at(ch, &state[..n])?);
                        let what = unit(&state[n..2 * n]);
                        chart.samples.push(ModuliSample {
                            component: k,
                            angle,
                            level: c,
                            point: ChartPoint::new(ch, state[..n].to_vec()),
                            frame: vec![xhat.iter().map(|v| v * sign).collect(), what],
                        });
                    }
                }
            }
        }
        _ => {
            return Err(ModuliError::Unsupported(format!("moduli of dimension {gap} in dimension {}", s.dim)));
        }
    }
    Ok(chart)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_exponential_closed_forms() {
        let d = expm2(&[1.0, 0.0, 0.0, 2.0], 0.5);
        assert!((d[0] - 0.5f64.exp()).abs() < 1e-14 && (d[3] - 1f64.exp()).abs() < 1e-14);
        let r = expm2(&[0.0, -1.0, 1.0, 0.0], 0.3);
        assert!((r[0] - 0.3f64.cos()).abs() < 1e-14 && (r[2] - 0.3f64.sin()).abs() < 1e-14);
        let j = expm2(&[2.0, 1.0, 0.0, 2.0], 0.7);
        assert!((j[1] - 0.7 * 1.4f64.exp()).abs() < 1e-12);
    }
}
