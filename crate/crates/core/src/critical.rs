//! Rest points: grid seeding, damped Newton refinement, linearization,
//! index and orientation frames.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::EvalError;
use crate::linalg;
use crate::scenario::{ChartPoint, Scenario};

pub const HYPERBOLICITY_MARGIN: f64 = 1e-6;
pub const DEDUP_DISTANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CriticalError {
    #[error("grid density {0} is below the minimum of 16 per axis")]
    GridTooCoarse(usize),
    #[error("Newton did not converge from seed {seed:?} in chart {chart} (residual {residual:e})")]
    NewtonFailed { chart: String, seed: Vec<f64>, residual: f64 },
    #[error("rest point at {coords:?} in chart {chart} is not hyperbolic (eigenvalue real part {re:e})")]
    NonHyperbolic { chart: String, coords: Vec<f64>, re: f64 },
    #[error("|X| = {0:e} is too large to linearize")]
    NotAZero(f64),
    #[error("eigenspace of dimension {got} does not match multiplicity {want}")]
    DefectiveEigenspace { got: usize, want: usize },
    #[error("disk radius {rho:e} too large: remainder {remainder:e} exceeds {bound:e}")]
    RadiusTooLarge { rho: f64, remainder: f64, bound: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Serialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RestPoint {
    pub id: usize,
    pub point: ChartPoint,
    pub f: f64,
    /// `DX` row-major in the chart of `point`.
    pub jacobian: Vec<f64>,
    pub eigenvalues: Vec<Eigenvalue>,
    pub index: usize,
    /// Canonical ordered basis of the unstable eigenspace.
    pub unstable_frame: Vec<Vec<f64>>,
    /// Real parts of the eigenvalues belonging to `unstable_frame`.
    pub unstable_rates: Vec<f64>,
    pub stable_frame: Vec<Vec<f64>>,
    pub stable_rates: Vec<f64>,
    /// Inverse of the matrix with columns `[unstable_frame | stable_frame]`, row-major.
    pub frame_inverse: Vec<f64>,
    pub residual: f64,
    /// Largest `|DX E - E B|` over both frames.
    pub frame_residual: f64,
    /// Whether both frames consist of eigenvectors of real eigenvalues.
    pub diagonalizable: bool,
}

impl RestPoint {
    pub fn dim(&self) -> usize {
        self.point.coords.len()
    }

    pub fn min_abs_rate(&self) -> f64 {
        self.eigenvalues.iter().map(|e| e.re.abs()).fold(f64::INFINITY, f64::min)
    }

    /// Coordinates of a displacement `d` (chart of `point`) along `[unstable | stable]`.
    pub fn frame_coordinates(&self, d: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.frame_inverse[i * n + j] * d[j]).sum()).collect()
    }
}

/// Orientation choice per rest point: the effective frame of `x` is its
/// canonical unstable frame with the first vector multiplied by `signs[x]`;
/// for index-0 points the sign is the point orientation itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Orientations {
    pub signs: Vec<i8>,
}

impl Orientations {
    pub fn sign(&self, x: usize) -> f64 {
        f64::from(self.signs[x])
    }

    pub fn flipped(&self, x: usize) -> Orientations {
        let mut o = self.clone();
        o.signs[x] = -o.signs[x];
        o
    }

    pub fn random(count: usize, seed: u64) -> Orientations {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Orientations { signs: (0..count).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect() }
    }

    /// Effective oriented unstable frame of `rp`.
    pub fn frame(&self, rp: &RestPoint) -> Vec<Vec<f64>> {
        let mut frame = rp.unstable_frame.clone();
        if let Some(first) = frame.first_mut() {
            let s = self.sign(rp.id);
            first.iter_mut().for_each(|c| *c *= s);
        }
        frame
    }
}

/// Canonical orientations: every sign `+1`. Deterministic by construction.
pub fn choose_orientations(rest_points: &[RestPoint]) -> Orientations {
    Orientations { signs: vec![1; rest_points.len()] }
}

#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    pub grid_density: usize,
    pub newton_tol: f64,
    pub max_newton_iterations: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { grid_density: 32, newton_tol: 1e-12, max_newton_iterations: 80 }
    }
}

fn grid_points(s: &Scenario, chart: usize, g: usize) -> Vec<Vec<f64>> {
    let axes = &s.charts[chart].axes;
    let n = axes.len();
    let total = g.pow(n as u32);
    (0..total)
        .map(|mut k| {
            axes.iter()
                .map(|a| {
                    let i = k % g;
                    k /= g;
                    let u = if a.periodic { i as f64 / g as f64 } else { (i as f64 + 0.5) / g as f64 };
                    a.lo + u * a.width()
                })
                .collect()
        })
        .collect()
}

fn neighbors(k: usize, g: usize, n: usize, periodic: &[bool]) -> Vec<usize> {
    let digits: Vec<usize> = (0..n).map(|a| (k / g.pow(a as u32)) % g).collect();
    let mut out = Vec::new();
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let mut idx = 0;
        let mut valid = true;
        let mut center = true;
        for a in 0..n {
            let off = (c % 3) as i64 - 1;
            c /= 3;
            center &= off == 0;
            let mut d = digits[a] as i64 + off;
            if d < 0 || d >= g as i64 {
                if periodic[a] {
                    d = d.rem_euclid(g as i64);
                } else {
                    valid = false;
                    break;
                }
            }
            idx += d as usize * g.pow(a as u32);
        }
        if valid && !center {
            out.push(idx);
        }
    }
    out
}

/// Damped Newton on `X = 0` in one chart. Returns the refined point and its residual.
pub fn newton(s: &Scenario, chart: usize, seed: &[f64], cfg: &SearchConfig) -> (Vec<f64>, f64) {
    let n = s.dim;
    let mut x = seed.to_vec();
    let res = |p: &[f64]| s.field_at(chart, p).map(|v| linalg::norm(&v)).unwrap_or(f64::INFINITY);
    let mut r = res(&x);
    for _ in 0..cfg.max_newton_iterations {
        if r < 1e-2 * cfg.newton_tol {
            break;
        }
        let Ok(fj) = s.jacobian_at(chart, &x) else { break };
        let Ok(v) = s.field_at(chart, &x) else { break };
        let Some(step) = linalg::solve(&fj, &v, n) else { break };
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-6 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a - lambda * d).collect();
            let rt = res(&trial);
            if rt < r {
                x = trial;
                r = rt;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    s.charts[chart].wrap(&mut x);
    (x, r)
}

/// Locates, certifies and orders all rest points.
pub fn find_rest_points(s: &Scenario, cfg: &SearchConfig) -> Result<Vec<RestPoint>, CriticalError> {
    if cfg.grid_density < 16 {
        return Err(CriticalError::GridTooCoarse(cfg.grid_density));
    }
    let g = cfg.grid_density;
    let mut found: Vec<ChartPoint> = Vec::new();
    for chart in 0..s.charts.len() {
        let pts = grid_points(s, chart, g);
        let norms: Vec<f64> = pts
            .par_iter()
            .map(|p| s.field_at(chart, p).map(|v| linalg::norm(&v)).unwrap_or(f64::INFINITY))
            .collect();
        let finite_max = norms.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
        let periodic: Vec<bool> = s.charts[chart].axes.iter().map(|a| a.periodic).collect();
        let seeds: Vec<usize> = (0..pts.len())
            .filter(|&k| norms[k].is_finite())
            .filter(|&k| neighbors(k, g, s.dim, &periodic).iter().all(|&j| norms[k] <= norms[j]))
            .collect();
        let refined: Vec<(usize, Vec<f64>, f64)> = seeds
            .par_iter()
            .map(|&k| {
                let (x, r) = newton(s, chart, &pts[k], cfg);
                (k, x, r)
            })
            .collect();
        for (k, x, r) in refined {
            let promising = norms[k] <= 0.05 * finite_max;
            if r > cfg.newton_tol || !s.charts[chart].contains(&x) {
                if promising && s.charts[chart].in_inner_box(&pts[k]) {
                    return Err(CriticalError::NewtonFailed {
                        chart: s.charts[chart].id.clone(),
                        seed: pts[k].clone(),
                        residual: r,
                    });
                }
                continue;
            }
            let p = s.home(&ChartPoint::new(chart, x));
            if !found.iter().any(|q| s.distance(q, &p) < DEDUP_DISTANCE) {
                found.push(p);
            }
        }
    }
    let mut points = found
        .into_iter()
        .map(|p| certify(s, p, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    points.sort_by(|a, b| {
        a.index
            .cmp(&b.index)
            .then(a.f.total_cmp(&b.f))
            .then(a.point.chart.cmp(&b.point.chart))
            .then_with(|| {
                a.point.coords.iter().zip(&b.point.coords).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    for (i, p) in points.iter_mut().enumerate() {
        p.id = i;
    }
    Ok(points)
}

/// Re-polishes `p` in its own chart and computes all linearization data.
pub fn certify(s: &Scenario, p: ChartPoint, cfg: &SearchConfig) -> Result<RestPoint, CriticalError> {
    let (x, r) = newton(s, p.chart, &p.coords, cfg);
    let point = ChartPoint::new(p.chart, x);
    let lin = linearize_and_index(s, &point)?;
    let f = s.f_at(point.chart, &point.coords)?;
    Ok(RestPoint { residual: r, f, point, ..lin })
}

/// Frame vectors, their rates, and whether the restriction is diagonal in the frame.
type ClusterFrame = (Vec<Vec<f64>>, Vec<f64>, bool);

fn cluster_frame(a: &DMatrix<f64>, eig: &[Eigenvalue]) -> Result<ClusterFrame, CriticalError> {
    let n = a.nrows();
    let scale = a.amax().max(1.0);
    let mut sorted: Vec<&Eigenvalue> = eig.iter().collect();
    sorted.sort_by(|p, q| q.re.total_cmp(&p.re).then(q.im.total_cmp(&p.im)));
    let mut frame = Vec::new();
    let mut rates = Vec::new();
    let mut diagonal = true;
    let mut i = 0;
    while i < sorted.len() {
        let lead = sorted[i];
        let mut j = i + 1;
        while j < sorted.len() && (sorted[j].re - lead.re).abs() <= 1e-7 * scale {
            j += 1;
        }
        let cluster = &sorted[i..j];
        let m = cluster.len();
        let re = cluster.iter().map(|e| e.re).sum::<f64>() / m as f64;
        let im = cluster.iter().map(|e| e.im.abs()).fold(0.0, f64::max);
        let shifted = if im > 1e-9 * scale {
            diagonal = false;
            let b = a - DMatrix::identity(n, n) * re;
            &b * &b + DMatrix::identity(n, n) * (im * im)
        } else {
            a - DMatrix::identity(n, n) * re
        };
        let power = (0..m.saturating_sub(1)).fold(shifted.clone(), |acc, _| &acc * &shifted);
        let rows: Vec<f64> = power.transpose().as_slice().to_vec();
        let mut basis = linalg::null_space(&rows, n, n, 1e-7);
        if basis.len() != m {
            return Err(CriticalError::DefectiveEigenspace { got: basis.len(), want: m });
        }
        for v in basis.iter_mut() {
            let len = linalg::norm(v);
            v.iter_mut().for_each(|c| *c /= len);
            if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|c| *c = -*c);
                }
            }
        }
        basis.sort_by(|p, q| {
            q.iter().zip(p.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        if m > 1 && im <= 1e-9 * scale {
            // repeated real eigenvalue: eigenvectors only if DX acts as a scalar on the span
            let resid = basis.iter().map(|v| {
                let av = a * nalgebra::DVector::from_column_slice(v);
                (av - nalgebra::DVector::from_column_slice(v) * re).amax()
            });
            if resid.fold(0.0, f64::max) > 1e-8 * scale {
                diagonal = false;
            }
        }
        frame.extend(basis);
        rates.extend(std::iter::repeat_n(re, m));
        i = j;
    }
    Ok((frame, rates, diagonal))
}

fn frame_residual(a: &DMatrix<f64>, frame: &[Vec<f64>]) -> f64 {
    if frame.is_empty() {
        return 0.0;
    }
    let n = a.nrows();
    let cols: Vec<&[f64]> = frame.iter().map(Vec::as_slice).collect();
    let e = linalg::from_columns(&cols, n);
    let ae = a * &e;
    let b = e.clone().svd(true, true).solve(&ae, 1e-14).unwrap_or_else(|_| DMatrix::zeros(frame.len(), frame.len()));
    (ae - e * b).amax()
}

/// Linearization `DX`, eigenvalues, index and canonical frames at a zero of `X`.
pub fn linearize_and_index(s: &Scenario, p: &ChartPoint) -> Result<RestPoint, CriticalError> {
    let n = s.dim;
    let x = s.field_at(p.chart, &p.coords)?;
    let r = linalg::norm(&x);
    if r > 1e-10 {
        return Err(CriticalError::NotAZero(r));
    }
    let jac = s.jacobian_at(p.chart, &p.coords)?;
    let a = DMatrix::from_row_slice(n, n, &jac);
    let eig: Vec<Eigenvalue> =
        a.complex_eigenvalues().iter().map(|c| Eigenvalue { re: c.re, im: c.im }).collect();
    let worst = eig.iter().map(|e| e.re).min_by(|p, q| p.abs().total_cmp(&q.abs())).unwrap_or(1.0);
    if worst.abs() <= HYPERBOLICITY_MARGIN {
        return Err(CriticalError::NonHyperbolic {
            chart: s.charts[p.chart].id.clone(),
            coords: p.coords.clone(),
            re: worst,
        });
    }
    let (unstable, stable): (Vec<Eigenvalue>, Vec<Eigenvalue>) = eig.iter().cloned().partition(|e| e.re > 0.0);
    let index = unstable.len();
    let (unstable_frame, unstable_rates, du) = cluster_frame(&a, &unstable)?;
    let (stable_frame, stable_rates, ds) = cluster_frame(&a, &stable)?;
    let frame_residual = frame_residual(&a, &unstable_frame).max(frame_residual(&a, &stable_frame));
    let cols: Vec<&[f64]> = unstable_frame.iter().chain(&stable_frame).map(Vec::as_slice).collect();
    let full = linalg::from_columns(&cols, n);
    let inv = full.try_inverse().unwrap_or_else(|| DMatrix::identity(n, n));
    let frame_inverse = inv.transpose().as_slice().to_vec();
    let mut eigenvalues = eig;
    eigenvalues.sort_by(|p, q| q.re.total_cmp(&p.re).then(q.im.total_cmp(&p.im)));
    Ok(RestPoint {
        id: 0,
        point: p.clone(),
        f: s.f_at(p.chart, &p.coords)?,
        jacobian: jac,
        eigenvalues,
        index,
        unstable_frame,
        unstable_rates,
        stable_frame,
        stable_rates,
        frame_inverse,
        residual: r,
        frame_residual,
        diagonalizable: du && ds,
    })
}

/// Index recomputed in every other chart containing the point.
pub fn index_in_other_charts(s: &Scenario, rp: &RestPoint) -> Result<Vec<(usize, usize)>, CriticalError> {
    let mut out = Vec::new();
    for c in 0..s.charts.len() {
        if c == rp.point.chart {
            continue;
        }
        if let Some(q) = s.point_in(&rp.point, c) {
            let lin = linearize_and_index(s, &ChartPoint::new(c, q))?;
            out.push((c, lin.index));
        }
    }
    Ok(out)
}

/// First-order patch of the unstable manifold: seeds on the sphere of
/// radius `rho` in the span of the (effective) unstable frame.
#[derive(Debug, Clone)]
pub struct UnstableDisk {
    pub rho: f64,
    /// Unit parameters on the unstable sphere (frame coordinates).
    pub params: Vec<Vec<f64>>,
    pub seeds: Vec<ChartPoint>,
}

pub fn disk_point(rp: &RestPoint, frame: &[Vec<f64>], rho: f64, u: &[f64]) -> ChartPoint {
    let mut c = rp.point.coords.clone();
    for (v, uj) in frame.iter().zip(u) {
        for (ci, vi) in c.iter_mut().zip(v) {
            *ci += rho * uj * vi;
        }
    }
    ChartPoint::new(rp.point.chart, c)
}

fn sphere_params(k: usize, m: usize) -> Vec<Vec<f64>> {
    match k {
        0 => vec![vec![]],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..m)
            .map(|j| {
                let th = std::f64::consts::TAU * j as f64 / m as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            // latitude rings times the lower-dimensional sphere
            let lower = sphere_params(k - 1, m);
            let mut out = Vec::new();
            for i in 1..m {
                let phi = std::f64::consts::PI * i as f64 / m as f64;
                for l in &lower {
                    let mut v: Vec<f64> = l.iter().map(|c| c * phi.sin()).collect();
                    v.push(phi.cos());
                    out.push(v);
                }
            }
            out.push(std::iter::repeat_n(0.0, k - 1).chain([1.0]).collect());
            out.push(std::iter::repeat_n(0.0, k - 1).chain([-1.0]).collect());
            out
        }
    }
}

pub fn unstable_disk(
    s: &Scenario,
    rp: &RestPoint,
    orientation: &Orientations,
    rho: f64,
    samples_per_dim: usize,
) -> Result<UnstableDisk, CriticalError> {
    let n = s.dim;
    let frame = orientation.frame(rp);
    let params = sphere_params(rp.index, samples_per_dim.max(4));
    let min_rate = rp.min_abs_rate();
    let bound = 0.1 * min_rate * rho;
    let mut seeds = Vec::with_capacity(params.len());
    for u in &params {
        let q = disk_point(rp, &frame, rho, u);
        let xq = s.field_at(q.chart, &q.coords)?;
        let d = s.charts[q.chart].diff(&q.coords, &rp.point.coords);
        let lin: Vec<f64> = (0..n).map(|i| (0..n).map(|j| rp.jacobian[i * n + j] * d[j]).sum()).collect();
        let remainder = linalg::norm(&xq.iter().zip(&lin).map(|(a, b)| a - b).collect::<Vec<_>>());
        if remainder > bound {
            return Err(CriticalError::RadiusTooLarge { rho, remainder, bound });
        }
        let mut q = q;
        s.charts[q.chart].wrap(&mut q.coords);
        seeds.push(q);
    }
    Ok(UnstableDisk { rho, params, seeds })
}

/// Rest-point counts per index.
pub fn counts_per_index(points: &[RestPoint], n: usize) -> Vec<usize> {
    (0..=n).map(|k| points.iter().filter(|p| p.index == k).count()).collect()
}
