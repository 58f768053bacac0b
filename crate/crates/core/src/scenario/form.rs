//! Differential forms with expression coefficients, stored per chart.

use thiserror::Error;

use crate::expr::{EvalError, Expr, Tape};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormError {
    #[error("degree {0} exceeds dimension {1}")]
    DegreeOverflow(usize, usize),
    #[error("forms live on different atlases ({0} vs {1} charts)")]
    AtlasMismatch(usize, usize),
    #[error("multi-index {0:?} is not strictly increasing within 1..={1}")]
    BadMultiIndex(Vec<usize>, usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Strictly increasing zero-based index lists of length `r` drawn from
/// `0..n`, in lexicographic order.
pub fn multi_indices(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if r <= n {
        rec(0, n, r, &mut Vec::new(), &mut out);
    }
    out
}

pub fn binomial(n: usize, r: usize) -> usize {
    if r > n {
        return 0;
    }
    (0..r).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Sign of the permutation sorting `idx`, or `None` if it repeats an entry.
fn sort_sign(idx: &[usize]) -> Option<(f64, Vec<usize>)> {
    let mut v = idx.to_vec();
    let mut sign = 1.0;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] == v[j + 1] {
                return None;
            }
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((sign, v))
}

fn position(indices: &[Vec<usize>], target: &[usize]) -> usize {
    indices.iter().position(|i| i == target).expect("multi-index in range")
}

/// Coefficients of a degree-r form in one chart, dense over [`multi_indices`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocalForm {
    pub dim: usize,
    pub degree: usize,
    pub coeffs: Vec<Expr>,
}

impl LocalForm {
    pub fn zero(dim: usize, degree: usize) -> LocalForm {
        LocalForm { dim, degree, coeffs: vec![Expr::zero(); binomial(dim, degree)] }
    }

    pub fn function(dim: usize, g: Expr) -> LocalForm {
        LocalForm { dim, degree: 0, coeffs: vec![g] }
    }

    /// Builds from sparse `(zero-based multi-index, coefficient)` terms; the
    /// index list may be unsorted, the sign of the sorting permutation is
    /// applied and repeated indices contribute nothing.
    pub fn from_terms(dim: usize, degree: usize, terms: &[(Vec<usize>, Expr)]) -> Result<LocalForm, FormError> {
        if degree > dim {
            return Err(FormError::DegreeOverflow(degree, dim));
        }
        let basis = multi_indices(dim, degree);
        let mut out = LocalForm::zero(dim, degree);
        for (idx, c) in terms {
            if idx.len() != degree || idx.iter().any(|&i| i >= dim) {
                return Err(FormError::BadMultiIndex(idx.iter().map(|i| i + 1).collect(), dim));
            }
            if let Some((sign, sorted)) = sort_sign(idx) {
                let k = position(&basis, &sorted);
                out.coeffs[k] = out.coeffs[k].clone() + c.clone() * sign;
            }
        }
        Ok(out)
    }

    /// `dg` for a function `g` expressed in this chart.
    pub fn differential(dim: usize, g: &Expr) -> LocalForm {
        LocalForm { dim, degree: 1, coeffs: g.gradient(dim) }
    }

    pub fn exterior_derivative(&self) -> Result<LocalForm, FormError> {
        let n = self.dim;
        if self.degree >= n {
            return Err(FormError::DegreeOverflow(self.degree + 1, n));
        }
        let src = multi_indices(n, self.degree);
        let dst = multi_indices(n, self.degree + 1);
        let mut out = LocalForm::zero(n, self.degree + 1);
        for (idx, a) in src.iter().zip(&self.coeffs) {
            if a.is_zero() {
                continue;
            }
            for j in 0..n {
                if idx.contains(&j) {
                    continue;
                }
                let da = a.derivative(j);
                if da.is_zero() {
                    continue;
                }
                // dt_j ^ dt_I = (-1)^{#{i in I : i < j}} dt_{sorted}
                let below = idx.iter().filter(|&&i| i < j).count();
                let mut sorted = idx.clone();
                sorted.insert(below, j);
                let k = position(&dst, &sorted);
                let term = if below % 2 == 0 { da } else { -da };
                out.coeffs[k] = out.coeffs[k].clone() + term;
            }
        }
        Ok(out)
    }

    pub fn wedge(&self, other: &LocalForm) -> Result<LocalForm, FormError> {
        let n = self.dim;
        let deg = self.degree + other.degree;
        if deg > n {
            return Err(FormError::DegreeOverflow(deg, n));
        }
        let a_idx = multi_indices(n, self.degree);
        let b_idx = multi_indices(n, other.degree);
        let dst = multi_indices(n, deg);
        let mut out = LocalForm::zero(n, deg);
        for (i, a) in a_idx.iter().zip(&self.coeffs) {
            if a.is_zero() {
                continue;
            }
            for (j, b) in b_idx.iter().zip(&other.coeffs) {
                if b.is_zero() {
                    continue;
                }
                let joined: Vec<usize> = i.iter().chain(j).copied().collect();
                if let Some((sign, sorted)) = sort_sign(&joined) {
                    let k = position(&dst, &sorted);
                    out.coeffs[k] = out.coeffs[k].clone() + a.clone() * b.clone() * sign;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &Expr) -> LocalForm {
        LocalForm {
            dim: self.dim,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|a| a.clone() * c.clone()).collect(),
        }
    }

    pub fn add(&self, other: &LocalForm) -> LocalForm {
        LocalForm {
            dim: self.dim,
            degree: self.degree,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.clone() + b.clone()).collect(),
        }
    }

    /// Nonzero terms with one-based indices, for serialization.
    pub fn terms(&self) -> Vec<(Vec<usize>, &Expr)> {
        multi_indices(self.dim, self.degree)
            .into_iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| (i.into_iter().map(|k| k + 1).collect(), c))
            .collect()
    }
}

/// Value of a degree-r form with coefficients `coeffs` (dense over
/// [`multi_indices`]) on the vectors `v[0..r]`.
pub fn contract(n: usize, degree: usize, coeffs: &[f64], v: &[&[f64]]) -> f64 {
    match degree {
        0 => coeffs[0],
        1 => (0..n).map(|i| coeffs[i] * v[0][i]).sum(),
        2 => {
            let mut s = 0.0;
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    s += coeffs[k] * (v[0][i] * v[1][j] - v[0][j] * v[1][i]);
                    k += 1;
                }
            }
            s
        }
        _ => multi_indices(n, degree)
            .iter()
            .zip(coeffs)
            .map(|(idx, c)| {
                let m: Vec<f64> = (0..degree).flat_map(|a| idx.iter().map(move |&i| v[a][i])).collect();
                c * crate::linalg::det(&m, degree)
            })
            .sum(),
    }
}

/// A form on the whole atlas: one [`LocalForm`] per chart.
#[derive(Debug, Clone)]
pub struct DifferentialForm {
    pub name: String,
    pub degree: usize,
    pub dim: usize,
    /// Declared closedness; [`crate::scenario::Scenario::check_consistency`] verifies it.
    pub closed: bool,
    /// Member of the generating set of closed forms used by cohomology checks.
    pub generator: bool,
    pub local: Vec<LocalForm>,
    tapes: Vec<Tape>,
}

impl PartialEq for DifferentialForm {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.degree == other.degree
            && self.closed == other.closed
            && self.generator == other.generator
            && self.local == other.local
    }
}

impl DifferentialForm {
    pub fn new(name: impl Into<String>, local: Vec<LocalForm>) -> Result<DifferentialForm, FormError> {
        let first = local.first().ok_or(FormError::AtlasMismatch(0, 1))?;
        let (dim, degree) = (first.dim, first.degree);
        if degree > dim {
            return Err(FormError::DegreeOverflow(degree, dim));
        }
        if local.iter().any(|l| l.dim != dim || l.degree != degree) {
            return Err(FormError::DegreeOverflow(degree, dim));
        }
        let tapes = local.iter().map(|l| Tape::compile(&l.coeffs)).collect();
        Ok(DifferentialForm {
            name: name.into(),
            degree,
            dim,
            closed: degree == dim,
            generator: false,
            local,
            tapes,
        })
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_flags(mut self, closed: bool, generator: bool) -> Self {
        self.closed = closed;
        self.generator = generator;
        self
    }

    pub fn function(name: impl Into<String>, per_chart: &[Expr], dim: usize) -> DifferentialForm {
        let local = per_chart.iter().map(|g| LocalForm::function(dim, g.clone())).collect();
        DifferentialForm::new(name, local).expect("0-forms are always valid")
    }

    pub fn exterior_derivative(&self) -> Result<DifferentialForm, FormError> {
        let local = self.local.iter().map(LocalForm::exterior_derivative).collect::<Result<Vec<_>, _>>()?;
        Ok(DifferentialForm::new(format!("d({})", self.name), local)?.with_flags(true, false))
    }

    pub fn wedge(&self, other: &DifferentialForm) -> Result<DifferentialForm, FormError> {
        if self.local.len() != other.local.len() {
            return Err(FormError::AtlasMismatch(self.local.len(), other.local.len()));
        }
        let local = self
            .local
            .iter()
            .zip(&other.local)
            .map(|(a, b)| a.wedge(b))
            .collect::<Result<Vec<_>, _>>()?;
        let closed = self.closed && other.closed;
        Ok(DifferentialForm::new(format!("({})^({})", self.name, other.name), local)?.with_flags(closed, false))
    }

    /// `sum_k c_k w_k`, all of the same degree.
    pub fn linear_combination(name: impl Into<String>, terms: &[(f64, &DifferentialForm)]) -> Result<DifferentialForm, FormError> {
        let (_, first) = terms.first().ok_or(FormError::AtlasMismatch(0, 1))?;
        let mut local: Vec<LocalForm> =
            first.local.iter().map(|l| LocalForm::zero(l.dim, l.degree)).collect();
        for (c, w) in terms {
            if w.degree != first.degree || w.local.len() != local.len() {
                return Err(FormError::AtlasMismatch(w.local.len(), local.len()));
            }
            for (acc, l) in local.iter_mut().zip(&w.local) {
                *acc = acc.add(&l.scale(&Expr::constant(*c)));
            }
        }
        let closed = terms.iter().all(|(_, w)| w.closed);
        Ok(DifferentialForm::new(name, local)?.with_flags(closed, false))
    }

    /// Coefficients in `chart` at `p`, written into `out` (length `binomial(n, r)`).
    pub fn coeffs_into(&self, chart: usize, p: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        crate::expr::with_scratch(|s| self.tapes[chart].eval_into(p, s, out))
    }

    pub fn coeffs(&self, chart: usize, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; binomial(self.dim, self.degree)];
        self.coeffs_into(chart, p, &mut out)?;
        Ok(out)
    }

    pub fn eval_on(&self, chart: usize, p: &[f64], vectors: &[&[f64]]) -> Result<f64, EvalError> {
        let c = self.coeffs(chart, p)?;
        Ok(contract(self.dim, self.degree, &c, vectors))
    }

    pub fn is_identically_zero(&self) -> bool {
        self.local.iter().all(|l| l.coeffs.iter().all(Expr::is_zero))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(multi_indices(2, 0), vec![Vec::<usize>::new()]);
        assert_eq!(binomial(3, 2), 3);
        assert!(multi_indices(2, 3).is_empty());
    }

    #[test]
    fn d_of_coordinate() {
        let g = LocalForm::function(2, e("t1"));
        let dg = g.exterior_derivative().unwrap();
        assert_eq!(dg.coeffs[0].as_const(), Some(1.0));
        assert!(dg.coeffs[1].is_zero());
    }

    #[test]
    fn d_of_sin_dt1() {
        let w = LocalForm::from_terms(2, 1, &[(vec![0], e("sin(2*pi*t2)"))]).unwrap();
        let dw = w.exterior_derivative().unwrap();
        let t2: f64 = 0.3;
        let want = -2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * t2).cos();
        assert!((dw.coeffs[0].eval(&[0.1, t2]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn d_of_closed_is_zero() {
        let w = LocalForm::from_terms(2, 1, &[(vec![0], Expr::one())]).unwrap();
        assert!(w.exterior_derivative().unwrap().coeffs.iter().all(Expr::is_zero));
        let top = LocalForm::from_terms(2, 2, &[(vec![0, 1], Expr::one())]).unwrap();
        assert!(matches!(top.exterior_derivative(), Err(FormError::DegreeOverflow(3, 2))));
    }

    #[test]
    fn wedge_basics() {
        let dt1 = LocalForm::from_terms(2, 1, &[(vec![0], Expr::one())]).unwrap();
        let dt2 = LocalForm::from_terms(2, 1, &[(vec![1], Expr::one())]).unwrap();
        assert_eq!(dt1.wedge(&dt2).unwrap().coeffs[0].as_const(), Some(1.0));
        assert_eq!(dt2.wedge(&dt1).unwrap().coeffs[0].as_const(), Some(-1.0));
        assert!(dt1.wedge(&dt1).unwrap().coeffs[0].is_zero());
        let fdt1 = dt1.scale(&e("t1"));
        let gdt2 = dt2.scale(&e("t2"));
        let p = fdt1.wedge(&gdt2).unwrap();
        assert_eq!(p.coeffs[0].eval(&[2.0, 3.0]).unwrap(), 6.0);
        let vol = dt1.wedge(&dt2).unwrap();
        assert!(matches!(vol.wedge(&dt1), Err(FormError::DegreeOverflow(3, 2))));
    }

    #[test]
    fn unsorted_terms_pick_up_sign() {
        let w = LocalForm::from_terms(2, 2, &[(vec![1, 0], Expr::one())]).unwrap();
        assert_eq!(w.coeffs[0].as_const(), Some(-1.0));
    }

    #[test]
    fn contraction() {
        let c = [2.0];
        assert_eq!(contract(2, 2, &c, &[&[1.0, 0.0], &[0.0, 1.0]]), 2.0);
        assert_eq!(contract(2, 2, &c, &[&[0.0, 1.0], &[1.0, 0.0]]), -2.0);
        let c3 = [1.0];
        let v = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]];
        assert_eq!(contract(3, 3, &c3, &[&v[0], &v[1], &v[2]]), 6.0);
    }
}
