//! Trajectories of `X` across charts.
//!
//! Integration uses the Dormand-Prince 5(4) pair with its fourth-order
//! dense output. The state may carry tangent vectors that follow the
//! variational equation `w' = DX w`.

use serde::Serialize;
use thiserror::Error;

use crate::critical::RestPoint;
use crate::expr::EvalError;
use crate::linalg;
use crate::quadrature::gauss_legendre;
use crate::scenario::{ChartPoint, Scenario};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("trajectory left every chart domain at {point:?} in chart {chart}")]
    AtlasCoverage { chart: String, point: Vec<f64> },
    #[error("Lyapunov function increased from {before} to {after} along the flow")]
    NotMonotone { before: f64, after: f64 },
    #[error("level {level} is not strictly inside the trajectory's range ({lo}, {hi})")]
    LevelOutOfRange { level: f64, lo: f64, hi: f64 },
    #[error("rest points {0} and {1} are closer than twice the capture radius")]
    CaptureOverlap(usize, usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn reversed(self) -> Direction {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    NearRestPoint,
    Level(f64),
    MaxTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Terminal {
    ConvergedTo(usize),
    ReachedLevel,
    LeftMaxTime,
    StepFailure,
}

#[derive(Debug, Clone, Copy)]
pub struct FlowConfig {
    pub atol: f64,
    pub rtol: f64,
    pub max_time: f64,
    pub max_steps: usize,
    /// Capture radius of `y` is `capture_scale * min(1, min |Re lambda_y|)`.
    pub capture_scale: f64,
    /// Saddles count as reached once the distance drops below `deep_factor * r_y`.
    pub deep_factor: f64,
    pub monotone_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            atol: 1e-10,
            rtol: 1e-9,
            max_time: 1e3,
            max_steps: 200_000,
            capture_scale: 1e-4,
            deep_factor: 1e-3,
            monotone_tol: 1e-9,
        }
    }
}

impl FlowConfig {
    pub fn halved(&self) -> FlowConfig {
        FlowConfig { atol: 0.5 * self.atol, rtol: 0.5 * self.rtol, ..*self }
    }

    pub fn capture_radius(&self, rp: &RestPoint) -> f64 {
        self.capture_scale * rp.min_abs_rate().min(1.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TraceOptions {
    /// Rest point the start is attached to; its capture ball stays disarmed
    /// until the trajectory has left it.
    pub anchor: Option<usize>,
    /// Re-orthonormalize the tangent blocks after every step.
    pub orthonormalize: bool,
    /// Record closest approaches to rest points within this radius (0 disables).
    pub proximity: f64,
    /// Require deep capture at sinks too, so the remaining tail is negligible.
    pub deep_sinks: bool,
    /// Only sinks of the flow direction terminate the trace; saddles are passed.
    pub sinks_only: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub chart: usize,
    pub coords: Vec<f64>,
    pub time: f64,
    pub f: f64,
}

/// One accepted step with its dense-output coefficients.
#[derive(Debug, Clone)]
pub struct Segment {
    pub chart: usize,
    pub t0: f64,
    pub h: f64,
    /// Fraction of the step that belongs to the trajectory (last step may be cut).
    pub theta_end: f64,
    pub f0: f64,
    pub f1: f64,
    rcont: Vec<f64>,
}

impl Segment {
    pub fn state_at(&self, theta: f64, out: &mut [f64]) {
        let m = out.len();
        let r = |k: usize, i: usize| self.rcont[k * m + i];
        let th1 = 1.0 - theta;
        for (i, o) in out.iter_mut().enumerate() {
            *o = r(0, i) + theta * (r(1, i) + th1 * (r(2, i) + theta * (r(3, i) + th1 * r(4, i))));
        }
    }

    pub fn state_len(&self) -> usize {
        self.rcont.len() / 5
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Approach {
    pub rest: usize,
    pub distance: f64,
    /// Frame coordinates (unstable first) of the displacement at closest approach.
    pub frame_coords: Vec<f64>,
    pub time: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub direction: Direction,
    pub dim: usize,
    pub anchor: Option<usize>,
    pub samples: Vec<Sample>,
    pub segments: Vec<Segment>,
    pub terminal: Terminal,
    pub approaches: Vec<Approach>,
    /// Product of transition Jacobian determinant signs crossed.
    pub orientation_sign: f64,
    /// Final state (position then tangent blocks) in `final_chart`.
    pub final_state: Vec<f64>,
    pub final_chart: usize,
}

impl Trajectory {
    pub fn end_point(&self) -> ChartPoint {
        ChartPoint::new(self.final_chart, self.final_state[..self.dim].to_vec())
    }

    pub fn start_point(&self) -> ChartPoint {
        let s = &self.samples[0];
        ChartPoint::new(s.chart, s.coords.clone())
    }

    pub fn final_tangents(&self) -> Vec<Vec<f64>> {
        self.final_state[self.dim..].chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn converged_to(&self) -> Option<usize> {
        match self.terminal {
            Terminal::ConvergedTo(y) => Some(y),
            _ => None,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.time) - self.samples[0].time
    }

    /// `sum over segments of the integral of g(chart, state, segment)` using an
    /// `order`-point Gauss rule per step, in time.
    pub fn integrate(&self, order: usize, mut g: impl FnMut(usize, &[f64]) -> Result<f64, EvalError>) -> Result<f64, EvalError> {
        let mut total = 0.0;
        self.for_each_node(order, |chart, state, w| {
            total += w * g(chart, state)?;
            Ok(())
        })?;
        Ok(total)
    }

    /// Visits the Gauss nodes of [`Trajectory::integrate`] with their time weights.
    pub fn for_each_node(&self, order: usize, mut g: impl FnMut(usize, &[f64], f64) -> Result<(), EvalError>) -> Result<(), EvalError> {
        let (x, w) = gauss_legendre(order);
        let mut state = Vec::new();
        for seg in &self.segments {
            state.resize(seg.state_len(), 0.0);
            let span = seg.h * seg.theta_end;
            for (xi, wi) in x.iter().zip(&w) {
                seg.state_at(xi * seg.theta_end, &mut state);
                g(seg.chart, &state, wi * span)?;
            }
        }
        Ok(())
    }

    /// Point on the trajectory where `f = c`, by bisection on the dense output.
    pub fn level_crossing(&self, s: &Scenario, c: f64) -> Result<ChartPoint, FlowError> {
        let (chart, state) = self.level_state(s, c)?;
        Ok(ChartPoint::new(chart, state[..self.dim].to_vec()))
    }

    /// Full state (position and tangents) where `f = c`.
    pub fn level_state(&self, s: &Scenario, c: f64) -> Result<(usize, Vec<f64>), FlowError> {
        let (first, last) = (self.samples[0].f, self.samples.last().map_or(f64::NAN, |x| x.f));
        let (lo, hi) = (first.min(last), first.max(last));
        if !(c > lo && c < hi) {
            return Err(FlowError::LevelOutOfRange { level: c, lo, hi });
        }
        let seg = self
            .segments
            .iter()
            .find(|g| (g.f0 - c) * (g.f1 - c) <= 0.0)
            .ok_or(FlowError::LevelOutOfRange { level: c, lo, hi })?;
        let theta = bisect_level(s, seg, self.dim, c, seg.theta_end)?;
        let mut state = vec![0.0; seg.state_len()];
        seg.state_at(theta, &mut state);
        s.charts[seg.chart].wrap(&mut state[..self.dim]);
        Ok((seg.chart, state))
    }

    /// Samples as a JSON polyline: `[[chart, t, f, x1, .., xn], ..]`.
    pub fn polyline(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.samples
                .iter()
                .map(|s| {
                    let mut row = vec![serde_json::json!(s.chart), serde_json::json!(s.time), serde_json::json!(s.f)];
                    row.extend(s.coords.iter().map(|c| serde_json::json!(c)));
                    serde_json::Value::Array(row)
                })
                .collect(),
        )
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Stepper<'a> {
    s: &'a Scenario,
    n: usize,
    blocks: usize,
    sign: f64,
    fj: Vec<f64>,
}

impl Stepper<'_> {
    fn rhs(&mut self, chart: usize, y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let n = self.n;
        if self.blocks == 0 {
            self.s.field_into(chart, y, &mut out[..n])?;
            out.iter_mut().for_each(|o| *o *= self.sign);
            return Ok(());
        }
        self.s.field_jacobian_into(chart, &y[..n], &mut self.fj)?;
        for (o, v) in out[..n].iter_mut().zip(&self.fj[..n]) {
            *o = self.sign * v;
        }
        for b in 0..self.blocks {
            let w = &y[n * (b + 1)..n * (b + 2)];
            for i in 0..n {
                let row = &self.fj[n + i * n..n + (i + 1) * n];
                out[n * (b + 1) + i] = self.sign * linalg::dot(row, w);
            }
        }
        Ok(())
    }
}

/// Traces trajectories against a fixed set of rest points.
pub struct Tracer<'a> {
    pub scenario: &'a Scenario,
    pub rest: &'a [RestPoint],
    pub cfg: FlowConfig,
    /// `rest_in_chart[c][y]`: coordinates of rest point `y` in chart `c`, if representable.
    rest_in_chart: Vec<Vec<Option<Vec<f64>>>>,
    radii: Vec<f64>,
}

impl<'a> Tracer<'a> {
    pub fn new(scenario: &'a Scenario, rest: &'a [RestPoint], cfg: FlowConfig) -> Tracer<'a> {
        let rest_in_chart = (0..scenario.charts.len())
            .map(|c| rest.iter().map(|y| scenario.point_in(&y.point, c)).collect())
            .collect();
        let radii = rest.iter().map(|y| cfg.capture_radius(y)).collect();
        Tracer { scenario, rest, cfg, rest_in_chart, radii }
    }

    pub fn capture_radius(&self, y: usize) -> f64 {
        self.radii[y]
    }

    fn is_sink(&self, y: usize, dir: Direction) -> bool {
        match dir {
            Direction::Forward => self.rest[y].index == 0,
            Direction::Backward => self.rest[y].index == self.scenario.dim,
        }
    }

    pub fn trace(
        &self,
        start: &ChartPoint,
        tangents: &[Vec<f64>],
        dir: Direction,
        stop: StopRule,
        opts: &TraceOptions,
    ) -> Result<Trajectory, FlowError> {
        let s = self.scenario;
        let n = s.dim;
        let blocks = tangents.len();
        let m = n * (1 + blocks);
        let cfg = &self.cfg;
        let mut chart = start.chart;
        let mut y: Vec<f64> = start.coords.iter().copied().chain(tangents.iter().flatten().copied()).collect();
        s.charts[chart].wrap(&mut y[..n]);
        let mut stepper = Stepper { s, n, blocks, sign: dir.sign(), fj: vec![0.0; n + n * n] };

        let mut f0 = s.f_at(chart, &y[..n])?;
        let mut traj = Trajectory {
            direction: dir,
            dim: n,
            anchor: opts.anchor,
            samples: vec![Sample { chart, coords: y[..n].to_vec(), time: 0.0, f: f0 }],
            segments: Vec::new(),
            terminal: Terminal::StepFailure,
            approaches: Vec::new(),
            orientation_sign: 1.0,
            final_state: y.clone(),
            final_chart: chart,
        };

        let count = self.rest.len();
        let mut armed: Vec<bool> = (0..count).map(|k| Some(k) != opts.anchor).collect();
        let mut best: Vec<Option<Approach>> = vec![None; count];

        // stationary start
        let x0 = s.field_at(chart, &y[..n])?;
        if stop == StopRule::NearRestPoint && linalg::norm(&x0) < 1e-13 {
            if let Some(k) = self.nearest(chart, &y[..n]).filter(|(k, d)| *d < self.radii[*k]).map(|(k, _)| k) {
                traj.terminal = Terminal::ConvergedTo(k);
                return Ok(traj);
            }
        }

        let mut k: Vec<Vec<f64>> = vec![vec![0.0; m]; 7];
        let mut ytmp = vec![0.0; m];
        let mut y1 = vec![0.0; m];
        let mut err = vec![0.0; m];
        stepper.rhs(chart, &y, &mut k[0])?;
        let mut t = 0.0;
        let t_end = match stop {
            StopRule::MaxTime(tm) => tm.min(cfg.max_time),
            _ => cfg.max_time,
        };
        let speed = linalg::norm(&k[0][..n]).max(1e-12);
        let mut h: f64 = (1e-3 * linalg::norm(&y[..n]).max(1e-3) / speed).clamp(1e-8, 0.05);
        let mut rejected_last = false;
        let mut steps = 0usize;

        loop {
            if t >= t_end * (1.0 - 1e-15) {
                traj.terminal = Terminal::LeftMaxTime;
                break;
            }
            if steps >= cfg.max_steps || h < 1e-14 * t.abs().max(1.0) {
                traj.terminal = Terminal::StepFailure;
                break;
            }
            steps += 1;
            let h_try = h.min(t_end - t);
            // stages
            let attempt = (|| -> Result<f64, EvalError> {
                let stage = |ytmp: &mut [f64], coeffs: &[(usize, f64)], k: &[Vec<f64>]| {
                    for i in 0..m {
                        let mut acc = y[i];
                        for &(j, a) in coeffs {
                            acc += h_try * a * k[j][i];
                        }
                        ytmp[i] = acc;
                    }
                };
                stage(&mut ytmp, &[(0, A21)], &k);
                let (done, rest) = k.split_at_mut(1);
                stepper.rhs(chart, &ytmp, &mut rest[0])?;
                let _ = done;
                stage(&mut ytmp, &[(0, A31), (1, A32)], &k);
                {
                    let (_, r) = k.split_at_mut(2);
                    stepper.rhs(chart, &ytmp, &mut r[0])?;
                }
                stage(&mut ytmp, &[(0, A41), (1, A42), (2, A43)], &k);
                {
                    let (_, r) = k.split_at_mut(3);
                    stepper.rhs(chart, &ytmp, &mut r[0])?;
                }
                stage(&mut ytmp, &[(0, A51), (1, A52), (2, A53), (3, A54)], &k);
                {
                    let (_, r) = k.split_at_mut(4);
                    stepper.rhs(chart, &ytmp, &mut r[0])?;
                }
                stage(&mut ytmp, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], &k);
                {
                    let (_, r) = k.split_at_mut(5);
                    stepper.rhs(chart, &ytmp, &mut r[0])?;
                }
                for i in 0..m {
                    y1[i] = y[i]
                        + h_try * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
                }
                {
                    let (_, r) = k.split_at_mut(6);
                    stepper.rhs(chart, &y1, &mut r[0])?;
                }
                let mut acc = 0.0;
                for i in 0..m {
                    err[i] = h_try
                        * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                    let sc = cfg.atol + cfg.rtol * y[i].abs().max(y1[i].abs());
                    acc += (err[i] / sc).powi(2);
                }
                Ok((acc / m as f64).sqrt())
            })();
            let e = match attempt {
                Ok(e) if e.is_finite() => e,
                _ => {
                    h = 0.25 * h_try;
                    rejected_last = true;
                    continue;
                }
            };
            if e > 1.0 {
                h = h_try * (0.9 * e.powf(-0.2)).max(0.2);
                rejected_last = true;
                continue;
            }

            // accepted
            let f1 = s.f_at(chart, &y1[..n])?;
            let tol = cfg.monotone_tol * f0.abs().max(1.0);
            let increased = match dir {
                Direction::Forward => f1 > f0 + tol,
                Direction::Backward => f1 < f0 - tol,
            };
            if increased {
                return Err(FlowError::NotMonotone { before: f0, after: f1 });
            }
            let mut rcont = vec![0.0; 5 * m];
            for i in 0..m {
                let ydiff = y1[i] - y[i];
                let bspl = h_try * k[0][i] - ydiff;
                rcont[i] = y[i];
                rcont[m + i] = ydiff;
                rcont[2 * m + i] = bspl;
                rcont[3 * m + i] = ydiff - h_try * k[6][i] - bspl;
                rcont[4 * m + i] = h_try
                    * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
            }
            let mut seg = Segment { chart, t0: t, h: h_try, theta_end: 1.0, f0, f1, rcont };

            let mut finished = None;
            if let StopRule::Level(c) = stop {
                if (f0 - c) * (f1 - c) <= 0.0 && f0 != f1 {
                    let theta = bisect_level(s, &seg, n, c, 1.0)?;
                    seg.theta_end = theta;
                    seg.state_at(theta, &mut y1);
                    seg.f1 = c;
                    finished = Some(Terminal::ReachedLevel);
                }
            }
            t += h_try * seg.theta_end;
            f0 = seg.f1;
            traj.segments.push(seg);
            std::mem::swap(&mut y, &mut y1);
            k.swap(0, 6);

            let mut refresh = false;
            if opts.orthonormalize && blocks > 0 {
                linalg::orthonormalize_blocks(&mut y[n..], n);
                refresh = true;
            }
            let before = y[..n].to_vec();
            s.charts[chart].wrap(&mut y[..n]);
            refresh |= before != y[..n];
            traj.samples.push(Sample { chart, coords: y[..n].to_vec(), time: t, f: f0 });

            if !s.charts[chart].in_inner_box(&y[..n]) {
                match s.handoff(chart, &y[..n]) {
                    Some((c2, q)) => {
                        let (_, jac) = s
                            .convert_with_jacobian(chart, &y[..n], c2)
                            .expect("handoff target is reachable");
                        for b in 0..blocks {
                            let w = y[n * (b + 1)..n * (b + 2)].to_vec();
                            for i in 0..n {
                                y[n * (b + 1) + i] = linalg::dot(&jac[i * n..(i + 1) * n], &w);
                            }
                        }
                        traj.orientation_sign *= linalg::det(&jac, n).signum();
                        y[..n].copy_from_slice(&q);
                        chart = c2;
                        f0 = s.f_at(chart, &y[..n])?;
                        traj.samples.push(Sample { chart, coords: q, time: t, f: f0 });
                        refresh = true;
                    }
                    None if !s.charts[chart].contains(&y[..n]) => {
                        return Err(FlowError::AtlasCoverage {
                            chart: s.charts[chart].id.clone(),
                            point: y[..n].to_vec(),
                        });
                    }
                    None => {}
                }
            }
            if refresh {
                stepper.rhs(chart, &y, &mut k[0])?;
            }

            if let Some(term) = finished {
                traj.terminal = term;
                break;
            }
            let capturing = !matches!(stop, StopRule::MaxTime(_));
            if let Some(term) = capturing.then(|| self.capture_step(chart, &y[..n], t, dir, opts, &mut armed, &mut best)).flatten() {
                traj.terminal = term;
                break;
            }

            let fac = (0.9 * e.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
            h = h_try * if rejected_last { fac.min(1.0) } else { fac };
            rejected_last = false;
        }
        traj.approaches = best.into_iter().flatten().collect();
        traj.final_state = y;
        traj.final_chart = chart;
        Ok(traj)
    }

    fn nearest(&self, chart: usize, p: &[f64]) -> Option<(usize, f64)> {
        self.rest_in_chart[chart]
            .iter()
            .enumerate()
            .filter_map(|(k, q)| q.as_ref().map(|q| (k, self.scenario.charts[chart].distance(p, q))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    #[allow(clippy::too_many_arguments)]
    fn capture_step(
        &self,
        chart: usize,
        p: &[f64],
        t: f64,
        dir: Direction,
        opts: &TraceOptions,
        armed: &mut [bool],
        best: &mut [Option<Approach>],
    ) -> Option<Terminal> {
        let c = &self.scenario.charts[chart];
        for (k, q) in self.rest_in_chart[chart].iter().enumerate() {
            let Some(q) = q else { continue };
            let d = c.distance(p, q);
            let r = self.radii[k];
            if opts.proximity > 0.0 && d < opts.proximity && best[k].as_ref().is_none_or(|a| d < a.distance) {
                let home = self.scenario.point_in(&ChartPoint::new(chart, p.to_vec()), self.rest[k].point.chart);
                if let Some(hp) = home {
                    let disp = self.scenario.charts[self.rest[k].point.chart].diff(&hp, &self.rest[k].point.coords);
                    best[k] = Some(Approach { rest: k, distance: d, frame_coords: self.rest[k].frame_coordinates(&disp), time: t });
                }
            }
            if !armed[k] {
                if d > 2.0 * r {
                    armed[k] = true;
                }
                continue;
            }
            if d < r {
                let sink = self.is_sink(k, dir);
                if opts.sinks_only && !sink {
                    continue;
                }
                if (sink && !opts.deep_sinks) || d < r * self.cfg.deep_factor {
                    return Some(Terminal::ConvergedTo(k));
                }
            }
        }
        None
    }
}

fn bisect_level(s: &Scenario, seg: &Segment, n: usize, c: f64, upper: f64) -> Result<f64, EvalError> {
    let mut state = vec![0.0; seg.state_len()];
    let (mut a, mut b) = (0.0, upper);
    let fa = seg.f0 - c;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        seg.state_at(mid, &mut state);
        let fm = s.f_at(seg.chart, &state[..n])? - c;
        if fm.abs() < 1e-13 || b - a < 1e-15 {
            return Ok(mid);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Post-hoc classification of where a finished trajectory ended.
pub fn classify_limit(
    s: &Scenario,
    traj: &Trajectory,
    rest: &[RestPoint],
    capture_radius: f64,
) -> Result<Option<usize>, FlowError> {
    for (i, a) in rest.iter().enumerate() {
        for b in &rest[i + 1..] {
            if s.distance(&a.point, &b.point) < 2.0 * capture_radius {
                return Err(FlowError::CaptureOverlap(a.id, b.id));
            }
        }
    }
    let end = traj.end_point();
    let Some(y) = rest.iter().find(|y| s.distance(&end, &y.point) < capture_radius) else {
        return Ok(None);
    };
    // contraction: speed decreases over the last samples inside the ball
    let inside: Vec<f64> = traj
        .samples
        .iter()
        .rev()
        .take_while(|smp| s.distance(&ChartPoint::new(smp.chart, smp.coords.clone()), &y.point) < capture_radius)
        .take(4)
        .map(|smp| s.field_at(smp.chart, &smp.coords).map(|v| linalg::norm(&v)))
        .collect::<Result<_, _>>()?;
    let contracting = inside.len() == 1 && traj.samples.len() == 1 || inside.windows(2).all(|w| w[0] <= w[1]);
    Ok(contracting.then_some(y.id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::{find_rest_points, SearchConfig};
    use crate::scenario::builtin;

    fn setup(name: &str) -> (Scenario, Vec<RestPoint>) {
        let s = builtin(name).unwrap();
        let r = find_rest_points(&s, &SearchConfig::default()).unwrap();
        (s, r)
    }

    fn find(r: &[RestPoint], coords: &[f64]) -> usize {
        r.iter().find(|p| p.point.coords.iter().zip(coords).all(|(a, b)| (a - b).abs() < 1e-9)).unwrap().id
    }

    #[test]
    fn circle_flows_to_min() {
        let (s, r) = setup("circle_cos");
        let tr = Tracer::new(&s, &r, FlowConfig::default());
        let traj = tr
            .trace(&ChartPoint::new(0, vec![0.3]), &[], Direction::Forward, StopRule::NearRestPoint, &TraceOptions::default())
            .unwrap();
        assert_eq!(traj.converged_to(), Some(find(&r, &[0.5])));
        assert!((traj.end_point().coords[0] - 0.5).abs() < tr.capture_radius(find(&r, &[0.5])));
        assert!(traj.samples.windows(2).all(|w| w[1].f <= w[0].f + 1e-12));
    }

    #[test]
    fn torus_axis_is_invariant() {
        let (s, r) = setup("flat_torus");
        let tr = Tracer::new(&s, &r, FlowConfig::default());
        let traj = tr
            .trace(&ChartPoint::new(0, vec![0.25, 0.0]), &[], Direction::Forward, StopRule::NearRestPoint, &TraceOptions::default())
            .unwrap();
        assert_eq!(traj.converged_to(), Some(find(&r, &[0.5, 0.0])));
        assert!(traj.samples.iter().all(|s| s.coords[1] == 0.0));
    }

    #[test]
    fn stationary_start() {
        let (s, r) = setup("flat_torus");
        let tr = Tracer::new(&s, &r, FlowConfig::default());
        let traj = tr
            .trace(&ChartPoint::new(0, vec![0.5, 0.5]), &[], Direction::Forward, StopRule::NearRestPoint, &TraceOptions::default())
            .unwrap();
        assert_eq!(traj.converged_to(), Some(find(&r, &[0.5, 0.5])));
        assert_eq!(traj.samples.len(), 1);
    }

    #[test]
    fn both_directions_from_generic_point() {
        let (s, r) = setup("flat_torus");
        let tr = Tracer::new(&s, &r, FlowConfig::default());
        let p = ChartPoint::new(0, vec![0.25, 0.25]);
        let fwd = tr.trace(&p, &[], Direction::Forward, StopRule::NearRestPoint, &TraceOptions::default()).unwrap();
        let bwd = tr.trace(&p, &[], Direction::Backward, StopRule::NearRestPoint, &TraceOptions::default()).unwrap();
        assert_eq!(classify_limit(&s, &fwd, &r, 1e-4).unwrap(), Some(find(&r, &[0.5, 0.5])));
        assert_eq!(classify_limit(&s, &bwd, &r, 1e-4).unwrap(), Some(find(&r, &[0.0, 0.0])));
        let short = tr.trace(&p, &[], Direction::Forward, StopRule::MaxTime(1e-3), &TraceOptions::default()).unwrap();
        assert_eq!(short.terminal, Terminal::LeftMaxTime);
        assert_eq!(classify_limit(&s, &short, &r, 1e-4).unwrap(), None);
        assert!(matches!(classify_limit(&s, &fwd, &r, 0.3), Err(FlowError::CaptureOverlap(..))));
    }

    #[test]
    fn level_crossings() {
        let (s, r) = setup("circle_cos");
        let tr = Tracer::new(&s, &r, FlowConfig::default());
        let max = find(&r, &[0.0]);
        let opts = TraceOptions { anchor: Some(max), ..Default::default() };
        let traj = tr.trace(&ChartPoint::new(0, vec![1e-6]), &[], Direction::Forward, StopRule::NearRestPoint, &opts).unwrap();
        let p = traj.level_crossing(&s, 0.0).unwrap();
        assert!((p.coords[0] - 0.25).abs() < 1e-10);
        let f0 = traj.samples[0].f;
        assert!(matches!(traj.level_crossing(&s, f0), Err(FlowError::LevelOutOfRange { .. })));

        let (s, r) = setup("flat_torus");
        let tr = Tracer::new(&s, &r, FlowConfig::default());
        let opts = TraceOptions { anchor: Some(find(&r, &[0.0, 0.0])), ..Default::default() };
        let traj = tr.trace(&ChartPoint::new(0, vec![1e-6, 0.0]), &[], Direction::Forward, StopRule::NearRestPoint, &opts).unwrap();
        let p = traj.level_crossing(&s, 1.0).unwrap();
        assert!((p.coords[0] - 0.25).abs() < 1e-10 && p.coords[1] == 0.0);
    }

    #[test]
    fn level_stop_rule() {
        let (s, r) = setup("circle_cos");
        let tr = Tracer::new(&s, &r, FlowConfig::default());
        let traj = tr.trace(&ChartPoint::new(0, vec![0.1]), &[], Direction::Forward, StopRule::Level(0.0), &TraceOptions::default()).unwrap();
        assert_eq!(traj.terminal, Terminal::ReachedLevel);
        assert!((traj.end_point().coords[0] - 0.25).abs() < 1e-10);
    }

    #[test]
    fn sphere_handoff_between_charts() {
        let (s, r) = setup("round_sphere_height");
        let tr = Tracer::new(&s, &r, FlowConfig::default());
        // start near the north pole in chart N, flow to the south pole in chart S
        let traj = tr
            .trace(&ChartPoint::new(1, vec![0.3, 0.1]), &[vec![1.0, 0.0], vec![0.0, 1.0]], Direction::Forward, StopRule::NearRestPoint, &TraceOptions::default())
            .unwrap();
        let south = r.iter().find(|p| p.index == 0).unwrap().id;
        assert_eq!(traj.converged_to(), Some(south));
        assert_eq!(traj.final_chart, 0);
        assert_eq!(traj.orientation_sign, 1.0);
        for w in traj.samples.windows(2) {
            if w[0].chart != w[1].chart {
                let q = s.convert(w[0].chart, &w[0].coords, w[1].chart).unwrap();
                assert!(s.charts[w[1].chart].distance(&q, &w[1].coords) < 1e-7);
            }
        }
    }

    #[test]
    fn variational_equation_matches_linear_flow() {
        // on the torus near the min the flow is nearly linear: w grows like exp(-4 pi^2 t)
        let (s, r) = setup("flat_torus");
        let tr = Tracer::new(&s, &r, FlowConfig::default());
        let traj = tr
            .trace(&ChartPoint::new(0, vec![0.5, 0.5]), &[vec![1.0, 0.0]], Direction::Forward, StopRule::MaxTime(0.01), &TraceOptions::default())
            .unwrap();
        let want = (-4.0 * std::f64::consts::PI.powi(2) * 0.01).exp();
        assert!((traj.final_tangents()[0][0] - want).abs() < 1e-8, "{:?} {want} {:?}", traj.final_tangents(), traj.terminal);
    }
}
