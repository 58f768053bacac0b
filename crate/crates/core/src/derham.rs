//! Integration of differential forms over unstable sets and moduli spaces,
//! and the identities relating them to the Morse complex.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::complex::{build_complex, in_column_span, rank, ComplexError, IntMatrix, MorseComplex};
use crate::expr::{EvalError, Expr};
use crate::moduli::{greater_relation, FiberSet, ModuliError, Skeleton};
use crate::scenario::{DifferentialForm, FormError, LocalForm, Scenario};
use crate::flow::Tracer;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("form {form} has degree {got}, expected {expected}")]
    Degree { form: String, expected: usize, got: usize },
    #[error("unsupported integral: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Moduli(#[from] ModuliError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureConfig {
    /// Gauss nodes per patch along the launch angle and on the inner disk.
    pub order: usize,
    /// Gauss nodes per integrator step along trajectories.
    pub step_order: usize,
    /// Target absolute accuracy of a single integral.
    pub tol: f64,
    /// Closest launch-angle offset from a separatrix.
    pub min_offset: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { order: 32, step_order: 4, tol: 1e-7, min_offset: 1e-9 }
    }
}

impl QuadratureConfig {
    pub fn doubled(self) -> Self {
        QuadratureConfig { order: 2 * self.order, step_order: 2 * self.step_order, ..self }
    }
}

/// Launch-angle fibers of every two-dimensional unstable set.
pub fn build_fibers(s: &Scenario, sk: &Skeleton, quad: &QuadratureConfig) -> Result<Vec<FiberSet>, BridgeError> {
    let tracer = Tracer::new(s, &sk.rest, sk.cfg.flow);
    sk.sweeps
        .iter()
        .map(|w| Ok(FiberSet::build(s, &tracer, &sk.rest[w.x], w, quad.order, quad.step_order, quad.min_offset)?))
        .collect()
}

/// Integration maps for one scenario, skeleton and orientation choice.
pub struct Bridge<'a> {
    pub scenario: &'a Scenario,
    pub skeleton: &'a Skeleton,
    pub complex: MorseComplex,
    pub quad: QuadratureConfig,
    fibers: &'a [FiberSet],
}

impl<'a> Bridge<'a> {
    pub fn new(scenario: &'a Scenario, skeleton: &'a Skeleton, fibers: &'a [FiberSet], quad: QuadratureConfig) -> Result<Self, BridgeError> {
        Ok(Bridge { scenario, skeleton, complex: build_complex(skeleton)?, quad, fibers })
    }

    fn sign(&self, x: usize) -> f64 {
        self.skeleton.orientations.sign(x)
    }

    fn fibers_of(&self, x: usize) -> Result<&FiberSet, BridgeError> {
        self.fibers
            .iter()
            .find(|f| f.x == x)
            .ok_or_else(|| BridgeError::Unsupported(format!("no unstable fibers for rest point {x}")))
    }

    fn value_at(&self, form: &DifferentialForm, x: usize) -> Result<f64, BridgeError> {
        let p = &self.skeleton.rest[x].point;
        Ok(form.coeffs(p.chart, &p.coords)?[0])
    }

    /// `∫ ω` over the oriented unstable set of `x`.
    pub fn int(&self, form: &DifferentialForm, x: usize) -> Result<f64, BridgeError> {
        let rp = &self.skeleton.rest[x];
        if form.degree != rp.index {
            return Err(BridgeError::Degree { form: form.name.clone(), expected: rp.index, got: form.degree });
        }
        let s = self.scenario;
        let sx = self.sign(x);
        match rp.index {
            0 => Ok(sx * self.value_at(form, x)?),
            1 => {
                let b = self
                    .skeleton
                    .branches_of(x)
                    .ok_or_else(|| BridgeError::Unsupported(format!("no branches for rest point {x}")))?;
                let plus = b.plus.integral(s, form, self.quad.step_order)?;
                let minus = b.minus.integral(s, form, self.quad.step_order)?;
                Ok(sx * (plus - minus))
            }
            2 => Ok(sx * self.fibers_of(x)?.integrate(form, |_| true)?),
            k => Err(BridgeError::Unsupported(format!("unstable set of dimension {k}"))),
        }
    }

    /// `Int(ω)` as a cochain on the basis of its degree.
    pub fn int_cochain(&self, form: &DifferentialForm) -> Result<Vec<f64>, BridgeError> {
        let basis = self.basis(form.degree, &form.name)?;
        basis.iter().map(|&x| self.int(form, x)).collect()
    }

    fn basis(&self, r: usize, name: &str) -> Result<&Vec<usize>, BridgeError> {
        self.complex
            .bases
            .get(r)
            .ok_or_else(|| BridgeError::Degree { form: name.into(), expected: self.complex.dim(), got: r })
    }

    /// `∫ ω` over the oriented moduli space from `x` down to `y`.
    pub fn ent(&self, form: &DifferentialForm, y: usize, x: usize) -> Result<f64, BridgeError> {
        let (rx, ry) = (&self.skeleton.rest[x], &self.skeleton.rest[y]);
        let gap = rx.index as isize - ry.index as isize;
        if gap != form.degree as isize {
            return Err(BridgeError::Degree { form: form.name.clone(), expected: gap.max(0) as usize, got: form.degree });
        }
        let s = self.scenario;
        match gap {
            0 => Ok(if x == y { self.value_at(form, x)? } else { 0.0 }),
            1 => self
                .skeleton
                .between(x, y)
                .map(|i| Ok(f64::from(i.sign) * i.line.integral(s, form, self.quad.step_order)?))
                .sum(),
            2 => {
                let Some(sweep) = self.skeleton.sweep_of(x) else {
                    return Err(BridgeError::Unsupported(format!("no sweep for rest point {x}")));
                };
                let keep: Vec<bool> = sweep.patches.iter().map(|p| p.to == y).collect();
                if !keep.iter().any(|&k| k) {
                    return Ok(0.0);
                }
                let v = self.fibers_of(x)?.integrate(form, |k| keep[k])?;
                Ok(self.sign(x) * self.sign(y) * v)
            }
            g => Err(BridgeError::Unsupported(format!("moduli space of dimension {g}"))),
        }
    }

    /// `E(ω ⊗ f)` for a cochain `f` of degree `p`.
    pub fn e_map(&self, form: &DifferentialForm, f: &[f64], p: usize) -> Result<Vec<f64>, BridgeError> {
        let r = form.degree;
        let lower = self.basis(p, &form.name)?;
        let upper = self.basis(p + r, &form.name)?;
        upper
            .iter()
            .map(|&x| {
                lower
                    .iter()
                    .zip(f)
                    .filter(|(_, fy)| **fy != 0.0)
                    .map(|(&y, fy)| Ok(fy * self.ent(form, y, x)?))
                    .sum()
            })
            .collect()
    }

    /// `δ Int(ω)` against `Int(dω)`.
    pub fn verify_chain_map(&self, form: &DifferentialForm, tol: f64) -> Result<IdentityCheck, BridgeError> {
        let r = form.degree;
        let left = self.complex.apply(r, &self.int_cochain(form)?);
        let right = self.int_cochain(&form.exterior_derivative()?)?;
        Ok(IdentityCheck::new(format!("chain_map[{}]", form.name), left, right, tol))
    }

    /// `δ E(ω⊗f)` against `E(dω⊗f) + (-1)^r E(ω⊗δf)`.
    pub fn verify_leibniz(&self, form: &DifferentialForm, f: &[f64], p: usize, tol: f64) -> Result<IdentityCheck, BridgeError> {
        let r = form.degree;
        let left = self.complex.apply(p + r, &self.e_map(form, f, p)?);
        let a = self.e_map(&form.exterior_derivative()?, f, p)?;
        let df = self.complex.apply(p, f);
        let b = self.e_map(form, &df, p + 1)?;
        let sign = if r.is_multiple_of(2) { 1.0 } else { -1.0 };
        let right = a.iter().zip(&b).map(|(a, b)| a + sign * b).collect();
        Ok(IdentityCheck::new(format!("leibniz[{}; p={p}]", form.name), left, right, tol))
    }

    /// Compares `Int(ω1∧ω2)` with `E(ω1 ⊗ Int ω2)` as cochains and as classes.
    pub fn verify_cup_diagram(&self, w1: &DifferentialForm, w2: &DifferentialForm, tol: f64) -> Result<CupCheck, BridgeError> {
        let (r, q) = (w1.degree, w2.degree);
        let k = r + q;
        let a = self.int_cochain(&w1.wedge(w2)?)?;
        let int2 = self.int_cochain(w2)?;
        let b = self.e_map(w1, &int2, q)?;
        let values = IdentityCheck::new(format!("cup[{}, {}]", w1.name, w2.name), a.clone(), b.clone(), tol);
        let prev = (k > 0).then(|| self.complex.delta(k - 1));
        let snapped = snap(&[a.as_slice(), b.as_slice(), int2.as_slice()].concat(), tol);
        let (class_equal, product_nontrivial, factor_nontrivial) = match &snapped {
            Some((_, ints)) => {
                let (ia, rest) = ints.split_at(a.len());
                let (ib, i2) = rest.split_at(b.len());
                let diff: Vec<i64> = ia.iter().zip(ib).map(|(x, y)| x - y).collect();
                let q_prev = (q > 0).then(|| self.complex.delta(q - 1));
                (Some(is_coboundary(prev, &diff)), Some(!is_coboundary(prev, ib)), Some(!is_coboundary(q_prev, i2)))
            }
            None => (None, None, None),
        };
        let verdict = match class_equal {
            None => Verdict::Inconclusive,
            Some(true) => Verdict::Pass,
            Some(false) => Verdict::Fail,
        };
        Ok(CupCheck {
            left_form: w1.name.clone(),
            right_form: w2.name.clone(),
            degrees: (r, q),
            values,
            denominator: snapped.map(|s| s.0),
            class_equal,
            product_nontrivial,
            factor_nontrivial,
            verdict,
            int_right: int2,
        })
    }

    /// Rank of `Int` on the generator forms of degree `r`, modulo
    /// coboundaries, against the Betti number.
    pub fn int_rank(&self, r: usize, betti: usize, tol: f64) -> Result<RankCheck, BridgeError> {
        let gens: Vec<&DifferentialForm> = self.scenario.forms.iter().filter(|f| f.generator && f.degree == r).collect();
        let vectors: Vec<Vec<f64>> = gens.iter().map(|f| self.int_cochain(f)).collect::<Result<_, _>>()?;
        let forms = gens.iter().map(|f| f.name.clone()).collect();
        let flat: Vec<f64> = vectors.concat();
        let Some((_, ints)) = snap(&flat, tol) else {
            return Ok(RankCheck { degree: r, forms, rank: None, betti, tolerance: tol, verdict: Verdict::Inconclusive });
        };
        let rows = self.complex.bases[r].len();
        let mut m = if r > 0 { self.complex.delta(r - 1).clone() } else { IntMatrix::zeros(rows, 0) };
        let base = rank(&m);
        for v in ints.chunks(rows.max(1)).take(gens.len()) {
            m = m.with_column(v);
        }
        let rk = rank(&m) - base;
        Ok(RankCheck { degree: r, forms, rank: Some(rk), betti, tolerance: tol, verdict: if rk == betti { Verdict::Pass } else { Verdict::Fail } })
    }

    /// Nontrivial products must be carried by a nonempty stratum of the
    /// matching gap; names a witness pair.
    pub fn detect(&self, cups: &[CupCheck], w1: &[&DifferentialForm], tol: f64) -> Result<Vec<Detection>, BridgeError> {
        let rel = greater_relation(self.skeleton);
        let mut out = Vec::new();
        for (cup, form) in cups.iter().zip(w1) {
            let (r, q) = cup.degrees;
            if r == 0 || cup.product_nontrivial != Some(true) || cup.factor_nontrivial != Some(true) {
                continue;
            }
            let stratum: Vec<(usize, usize)> = self
                .skeleton
                .rest
                .iter()
                .flat_map(|x| self.skeleton.rest.iter().map(move |y| (x, y)))
                .filter(|(x, y)| x.index == y.index + r && rel.direct[x.id][y.id])
                .map(|(x, y)| (x.id, y.id))
                .collect();
            let mut witness = None;
            'search: for &x in &self.complex.bases[r + q] {
                for (&y, fy) in self.complex.bases[q].iter().zip(&cup.int_right) {
                    if fy.abs() > tol && self.ent(form, y, x)?.abs() > tol && rel.direct[x][y] {
                        witness = Some((x, y));
                        break 'search;
                    }
                }
            }
            let witness = witness.or_else(|| stratum.first().copied());
            out.push(Detection {
                product: format!("{} x {}", cup.left_form, cup.right_form),
                gap: r,
                stratum_size: stratum.len(),
                witness,
                verdict: if stratum.is_empty() { Verdict::Fail } else { Verdict::Pass },
            });
        }
        Ok(out)
    }

    /// Every `Int` and `Ent` of the given forms, labelled, for convergence
    /// comparisons between quadrature orders.
    pub fn integral_table(&self, forms: &[&DifferentialForm]) -> Result<Vec<(String, f64)>, BridgeError> {
        let mut out = Vec::new();
        for f in forms {
            for &x in self.basis(f.degree, &f.name)? {
                out.push((format!("int[{}]({x})", f.name), self.int(f, x)?));
            }
            if f.degree == 0 {
                continue;
            }
            for x in &self.skeleton.rest {
                for y in &self.skeleton.rest {
                    if x.index == y.index + f.degree {
                        out.push((format!("ent[{}]({},{})", f.name, x.id, y.id), self.ent(f, y.id, x.id)?));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn is_coboundary(prev: Option<&IntMatrix>, v: &[i64]) -> bool {
    match prev {
        Some(m) => in_column_span(m, v),
        None => v.iter().all(|&x| x == 0),
    }
}

/// Common denominator `D <= 12` placing every value within `10·tol` of the
/// lattice `Z/D`, with the numerators.
pub fn snap(values: &[f64], tol: f64) -> Option<(i64, Vec<i64>)> {
    (1..=12i64).find_map(|d| {
        let ints: Vec<i64> = values.iter().map(|v| (v * d as f64).round() as i64).collect();
        let close = values.iter().zip(&ints).all(|(v, &k)| (v - k as f64 / d as f64).abs() <= 10.0 * tol);
        close.then_some((d, ints))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl IdentityCheck {
    pub fn new(name: String, left: Vec<f64>, right: Vec<f64>, tolerance: f64) -> IdentityCheck {
        let residual = left.iter().zip(&right).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let verdict = if residual < tolerance { Verdict::Pass } else { Verdict::Fail };
        IdentityCheck { name, left, right, residual, tolerance, verdict }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CupCheck {
    pub left_form: String,
    pub right_form: String,
    pub degrees: (usize, usize),
    /// `Int(ω1∧ω2)` against `E(ω1 ⊗ Int ω2)`.
    pub values: IdentityCheck,
    pub denominator: Option<i64>,
    pub class_equal: Option<bool>,
    /// Class of `E(ω1 ⊗ Int ω2)` is nonzero.
    pub product_nontrivial: Option<bool>,
    /// Class of `Int ω2` is nonzero.
    pub factor_nontrivial: Option<bool>,
    pub verdict: Verdict,
    pub int_right: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankCheck {
    pub degree: usize,
    pub forms: Vec<String>,
    pub rank: Option<usize>,
    pub betti: usize,
    /// Snapping tolerance for the integer lattice.
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct Detection {
    pub product: String,
    pub gap: usize,
    /// Pairs of that gap with a nonempty trajectory space.
    pub stratum_size: usize,
    pub witness: Option<(usize, usize)>,
    pub verdict: Verdict,
}

/// A random form `g`, `g dh` or `g dh1∧dh2` built from the scenario's global
/// functions, so it is consistent across charts.
pub fn random_form(s: &Scenario, degree: usize, rng: &mut impl Rng, name: &str) -> Result<DifferentialForm, BridgeError> {
    if s.functions.is_empty() {
        return Err(BridgeError::Unsupported(format!("scenario {} declares no global functions", s.name)));
    }
    let n = s.dim;
    let combo = |rng: &mut dyn rand::RngCore, constant: bool| -> Vec<f64> {
        let mut c: Vec<f64> = (0..s.functions.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        c.push(if constant { rng.gen_range(-1.0..1.0) } else { 0.0 });
        c
    };
    let g = combo(rng, true);
    let hs: Vec<Vec<f64>> = (0..degree).map(|_| combo(rng, false)).collect();
    let expr = |c: &[f64], chart: usize| -> Expr {
        s.functions
            .iter()
            .zip(c)
            .fold(Expr::constant(c[s.functions.len()]), |acc, (f, &k)| acc + f.per_chart[chart].clone() * k)
    };
    let local = (0..s.charts.len())
        .map(|chart| {
            hs.iter().try_fold(LocalForm::function(n, expr(&g, chart)), |acc, h| acc.wedge(&LocalForm::differential(n, &expr(h, chart))))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DifferentialForm::new(name, local)?)
}
