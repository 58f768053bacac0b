//! The Morse cochain complex over exact integers and rationals, its Betti
//! numbers, and an independent simplicial oracle.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::moduli::Skeleton;
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum ComplexError {
    #[error("no instanton enumeration for the gap-one pair ({x}, {y})")]
    MissingPair { x: usize, y: usize },
    #[error("simplicial input is not a complex: {0}")]
    NotComplex(String),
}

/// Dense row-major integer matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i64>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> IntMatrix {
        IntMatrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.rows, "shape mismatch");
        let mut out = IntMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a != 0 {
                    for j in 0..other.cols {
                        out.data[i * other.cols + j] += a * other.get(k, j);
                    }
                }
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Same matrix with `v` appended as an extra column.
    pub fn with_column(&self, v: &[i64]) -> IntMatrix {
        assert_eq!(v.len(), self.rows, "column length");
        let cols = self.cols + 1;
        let mut out = IntMatrix::zeros(self.rows, cols);
        for (i, &vi) in v.iter().enumerate() {
            for j in 0..self.cols {
                out.set(i, j, self.get(i, j));
            }
            out.set(i, self.cols, vi);
        }
        out
    }

    pub fn rows_vec(&self) -> Vec<Vec<i64>> {
        self.data.chunks(self.cols.max(1)).take(self.rows).map(<[i64]>::to_vec).collect()
    }
}

/// Exact rank by fraction-free (Bareiss) elimination on big integers.
pub fn rank(m: &IntMatrix) -> usize {
    let mut a: Vec<Vec<BigInt>> = (0..m.rows).map(|i| (0..m.cols).map(|j| BigInt::from(m.get(i, j))).collect()).collect();
    let mut prev = BigInt::from(1);
    let mut r = 0;
    for c in 0..m.cols {
        let Some(p) = (r..m.rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        for i in r + 1..m.rows {
            for j in c + 1..m.cols {
                let v = (&a[r][c] * &a[i][j] - &a[i][c] * &a[r][j]) / &prev;
                a[i][j] = v;
            }
            a[i][c] = BigInt::zero();
        }
        prev = a[r][c].abs();
        r += 1;
        if r == m.rows {
            break;
        }
    }
    r
}

/// Whether `v` lies in the column span of `m` over the rationals.
pub fn in_column_span(m: &IntMatrix, v: &[i64]) -> bool {
    rank(&m.with_column(v)) == rank(m)
}

/// Per degree: basis `𝒳_r` and the incidence matrix `I_{r+1}` with rows
/// in `𝒳_{r+1}` and columns in `𝒳_r`; `δ_r` acts by this matrix.
#[derive(Debug, Clone, Serialize)]
pub struct MorseComplex {
    pub bases: Vec<Vec<usize>>,
    pub incidence: Vec<IntMatrix>,
}

impl MorseComplex {
    pub fn dim(&self) -> usize {
        self.bases.len() - 1
    }

    pub fn counts(&self) -> Vec<usize> {
        self.bases.iter().map(Vec::len).collect()
    }

    /// Matrix of `δ_r : C^r → C^{r+1}`.
    pub fn delta(&self, r: usize) -> &IntMatrix {
        &self.incidence[r]
    }

    /// Position of rest point `x` in its degree basis.
    pub fn position(&self, x: usize) -> Option<(usize, usize)> {
        self.bases.iter().enumerate().find_map(|(r, b)| b.iter().position(|&y| y == x).map(|k| (r, k)))
    }

    /// `I(x, y)` for rest points of adjacent degrees, zero otherwise.
    pub fn incidence_of(&self, x: usize, y: usize) -> i64 {
        match (self.position(x), self.position(y)) {
            (Some((rx, kx)), Some((ry, ky))) if rx == ry + 1 => self.incidence[ry].get(kx, ky),
            _ => 0,
        }
    }

    /// `δ` applied to a cochain of degree `r`.
    pub fn apply(&self, r: usize, f: &[f64]) -> Vec<f64> {
        let m = &self.incidence[r];
        (0..m.rows).map(|i| (0..m.cols).map(|j| m.get(i, j) as f64 * f[j]).sum()).collect()
    }
}

/// Assembles the complex from the enumerated instantons; refuses when some
/// gap-one pair was never enumerated.
pub fn build_complex(sk: &Skeleton) -> Result<MorseComplex, ComplexError> {
    let n = sk.rest.first().map_or(0, |r| r.dim());
    let bases: Vec<Vec<usize>> = (0..=n).map(|r| sk.of_index(r)).collect();
    let mut incidence = Vec::with_capacity(n);
    for r in 0..n {
        let (upper, lower) = (&bases[r + 1], &bases[r]);
        let mut m = IntMatrix::zeros(upper.len(), lower.len());
        for (i, &x) in upper.iter().enumerate() {
            for (j, &y) in lower.iter().enumerate() {
                if !sk.enumerated.contains(&(x, y)) {
                    return Err(ComplexError::MissingPair { x, y });
                }
                m.set(i, j, sk.incidence(x, y));
            }
        }
        incidence.push(m);
    }
    Ok(MorseComplex { bases, incidence })
}

/// One two-step chain `x → y → z` with its incidence product.
#[derive(Debug, Clone, Serialize)]
pub struct ChainTerm {
    pub via: usize,
    pub first: i64,
    pub second: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaWitness {
    pub x: usize,
    pub z: usize,
    pub sum: i64,
    pub chains: Vec<ChainTerm>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaSquaredReport {
    pub holds: bool,
    /// Pairs with a nonzero sum.
    pub failures: Vec<DeltaWitness>,
    /// Pairs whose zero sum comes from two or more nonzero chains.
    pub cancellations: Vec<DeltaWitness>,
}

/// Nonzero chains `x → y → z` through rest points one degree apart.
pub fn two_step_chains(c: &MorseComplex, x: usize, z: usize) -> Vec<ChainTerm> {
    let Some((rx, _)) = c.position(x) else { return Vec::new() };
    if rx < 2 {
        return Vec::new();
    }
    c.bases[rx - 1]
        .iter()
        .map(|&y| ChainTerm { via: y, first: c.incidence_of(x, y), second: c.incidence_of(y, z) })
        .filter(|t| t.first * t.second != 0)
        .collect()
}

/// Exact check of `δ_{r+1} δ_r = 0` in every degree.
pub fn verify_delta_squared(c: &MorseComplex) -> DeltaSquaredReport {
    let mut failures = Vec::new();
    let mut cancellations = Vec::new();
    for r in 0..c.dim().saturating_sub(1) {
        let prod = c.incidence[r + 1].mul(&c.incidence[r]);
        for (i, &x) in c.bases[r + 2].iter().enumerate() {
            for (j, &z) in c.bases[r].iter().enumerate() {
                let chains = two_step_chains(c, x, z);
                let w = DeltaWitness { x, z, sum: prod.get(i, j), chains };
                if w.sum != 0 {
                    failures.push(w);
                } else if w.chains.len() >= 2 {
                    cancellations.push(w);
                }
            }
        }
    }
    DeltaSquaredReport { holds: failures.is_empty(), failures, cancellations }
}

/// Betti numbers of a cochain complex given by its coboundary matrices.
pub fn betti_from_coboundaries(counts: &[usize], deltas: &[IntMatrix]) -> (Vec<usize>, Vec<usize>) {
    let ranks: Vec<usize> = deltas.iter().map(rank).collect();
    let betti = (0..counts.len())
        .map(|r| {
            let out = ranks.get(r).copied().unwrap_or(0);
            let inc = if r > 0 { ranks[r - 1] } else { 0 };
            counts[r] - out - inc
        })
        .collect();
    (betti, ranks)
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityVerdict {
    pub degree: usize,
    pub betti: usize,
    pub count: usize,
    pub holds: bool,
    /// Equality rather than strict inequality in this degree.
    pub equality: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MorseVerdicts {
    pub degrees: Vec<InequalityVerdict>,
    pub euler_betti: i64,
    pub euler_counts: i64,
    pub euler_holds: bool,
}

impl MorseVerdicts {
    pub fn all_hold(&self) -> bool {
        self.euler_holds && self.degrees.iter().all(|d| d.holds)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CohomologyReport {
    pub counts: Vec<usize>,
    pub ranks: Vec<usize>,
    pub betti: Vec<usize>,
    pub inequalities: MorseVerdicts,
    /// Oracle Betti numbers when the manifold has a builtin triangulation.
    pub oracle: Option<Vec<usize>>,
    pub oracle_match: Option<bool>,
    /// Per gap `g >= 1`: whether some pair of that gap has a nonempty
    /// trajectory space.
    pub strata_nonempty: Vec<bool>,
}

pub fn betti_numbers(c: &MorseComplex) -> (Vec<usize>, Vec<usize>) {
    betti_from_coboundaries(&c.counts(), &c.incidence)
}

pub fn morse_inequalities(betti: &[usize], counts: &[usize]) -> MorseVerdicts {
    let alt = |v: &[usize]| v.iter().enumerate().map(|(r, &b)| if r % 2 == 0 { b as i64 } else { -(b as i64) }).sum::<i64>();
    let degrees = betti
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(degree, (&b, &c))| InequalityVerdict { degree, betti: b, count: c, holds: b <= c, equality: b == c })
        .collect();
    let (euler_betti, euler_counts) = (alt(betti), alt(counts));
    MorseVerdicts { degrees, euler_betti, euler_counts, euler_holds: euler_betti == euler_counts }
}

/// Full cohomology summary, compared against the triangulation oracle.
pub fn cohomology_report(s: &Scenario, sk: &Skeleton, c: &MorseComplex) -> Result<CohomologyReport, ComplexError> {
    let (betti, ranks) = betti_numbers(c);
    let counts = c.counts();
    let inequalities = morse_inequalities(&betti, &counts);
    let oracle = Triangulation::for_scenario(s).map(|t| t.betti()).transpose()?;
    let oracle_match = oracle.as_ref().map(|o| *o == betti);
    let rel = crate::moduli::greater_relation(sk);
    let n = c.dim();
    let strata_nonempty = (1..=n)
        .map(|g| {
            sk.rest.iter().any(|x| {
                sk.rest.iter().any(|y| x.index == y.index + g && rel.direct[x.id][y.id])
            })
        })
        .collect();
    Ok(CohomologyReport { counts, ranks, betti, inequalities, oracle, oracle_match, strata_nonempty })
}

/// A simplicial complex given by its top simplices; faces are generated.
#[derive(Debug, Clone, Serialize)]
pub struct Triangulation {
    pub name: String,
    pub top: Vec<Vec<usize>>,
}

impl Triangulation {
    pub fn triangle_circle() -> Triangulation {
        Triangulation { name: "triangle".into(), top: vec![vec![0, 1], vec![1, 2], vec![0, 2]] }
    }

    pub fn octahedron() -> Triangulation {
        // apexes 0 and 5 over the square 1-2-3-4
        let ring = [1, 2, 3, 4];
        let top = [0, 5]
            .iter()
            .flat_map(|&apex| (0..4).map(move |k| (apex, ring[k], ring[(k + 1) % 4])))
            .map(|(a, b, c)| sorted(vec![a, b, c]))
            .collect();
        Triangulation { name: "octahedron".into(), top }
    }

    /// Nine-vertex torus on the 3×3 periodic grid.
    pub fn torus9() -> Triangulation {
        let v = |i: usize, j: usize| 3 * (i % 3) + j % 3;
        let mut top = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                top.push(sorted(vec![v(i, j), v(i + 1, j), v(i + 1, j + 1)]));
                top.push(sorted(vec![v(i, j), v(i, j + 1), v(i + 1, j + 1)]));
            }
        }
        Triangulation { name: "torus9".into(), top }
    }

    /// Oracle for the closed manifolds the builtin charts describe: a
    /// periodic line, a doubly periodic square, or a two-chart surface
    /// without periodic axes (the sphere).
    pub fn for_scenario(s: &Scenario) -> Option<Triangulation> {
        let periodic = |c: &crate::scenario::Chart| c.axes.iter().filter(|a| a.periodic).count();
        match (s.dim, s.charts.len()) {
            (1, 1) if periodic(&s.charts[0]) == 1 => Some(Self::triangle_circle()),
            (2, 1) if periodic(&s.charts[0]) == 2 => Some(Self::torus9()),
            (2, 2) if s.charts.iter().all(|c| periodic(c) == 0) => Some(Self::octahedron()),
            _ => None,
        }
    }

    /// All faces by dimension, each sorted lexicographically.
    pub fn faces(&self) -> Vec<Vec<Vec<usize>>> {
        let d = self.top.iter().map(Vec::len).max().unwrap_or(1) - 1;
        let mut out: Vec<Vec<Vec<usize>>> = vec![Vec::new(); d + 1];
        for t in &self.top {
            let k = t.len();
            for mask in 1u32..(1 << k) {
                let face: Vec<usize> = (0..k).filter(|b| mask >> b & 1 == 1).map(|b| t[b]).collect();
                out[face.len() - 1].push(face);
            }
        }
        for f in &mut out {
            f.sort();
            f.dedup();
        }
        out
    }

    /// Coboundary matrices `C^k → C^{k+1}` (transposed boundaries).
    pub fn coboundaries(&self) -> Result<Vec<IntMatrix>, ComplexError> {
        let faces = self.faces();
        let mut out = Vec::new();
        for k in 0..faces.len().saturating_sub(1) {
            let (lo, hi) = (&faces[k], &faces[k + 1]);
            let mut m = IntMatrix::zeros(hi.len(), lo.len());
            for (i, s) in hi.iter().enumerate() {
                for drop in 0..s.len() {
                    let face: Vec<usize> = s.iter().enumerate().filter(|(p, _)| *p != drop).map(|(_, &v)| v).collect();
                    let j = lo.binary_search(&face).map_err(|_| ComplexError::NotComplex(format!("missing face {face:?}")))?;
                    m.set(i, j, if drop % 2 == 0 { 1 } else { -1 });
                }
            }
            out.push(m);
        }
        for w in out.windows(2) {
            if !w[1].mul(&w[0]).is_zero() {
                return Err(ComplexError::NotComplex("coboundary squared is nonzero".into()));
            }
        }
        Ok(out)
    }

    pub fn betti(&self) -> Result<Vec<usize>, ComplexError> {
        let counts: Vec<usize> = self.faces().iter().map(Vec::len).collect();
        Ok(betti_from_coboundaries(&counts, &self.coboundaries()?).0)
    }
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}
