//! Coordinate charts: boxes with bounded or periodic axes, and
//! transitions into other charts.

use serde::{Deserialize, Serialize};

use crate::expr::{with_scratch, EvalError, Expr, Tape};

/// Fraction of the half-width that counts as the inner box for handoff.
pub const INNER_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub periodic: bool,
}

impl Axis {
    pub fn bounded(lo: f64, hi: f64) -> Axis {
        Axis { lo, hi, periodic: false }
    }

    pub fn periodic(lo: f64, hi: f64) -> Axis {
        Axis { lo, hi, periodic: true }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub target: usize,
    /// Valid where this evaluates positive (and the image lies in the target box).
    pub overlap: Expr,
    pub map: Vec<Expr>,
    pub inverse: Vec<Expr>,
    overlap_tape: Tape,
    map_tape: Tape,
    jac_tape: Tape,
}

impl PartialEq for Transition {
    fn eq(&self, other: &Self) -> bool {
        self.target == other.target
            && self.overlap == other.overlap
            && self.map == other.map
            && self.inverse == other.inverse
    }
}

impl Transition {
    pub fn new(target: usize, overlap: Expr, map: Vec<Expr>, inverse: Vec<Expr>) -> Transition {
        let n = map.len();
        let jac: Vec<Expr> = map.iter().flat_map(|m| m.gradient(n)).collect();
        Transition {
            target,
            overlap_tape: Tape::compile(std::slice::from_ref(&overlap)),
            map_tape: Tape::compile(&map),
            jac_tape: Tape::compile(&jac),
            overlap,
            map,
            inverse,
        }
    }

    pub fn overlap_value(&self, p: &[f64]) -> Result<f64, EvalError> {
        let mut out = [0.0];
        with_scratch(|s| self.overlap_tape.eval_into(p, s, &mut out))?;
        Ok(out[0])
    }

    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.map.len()];
        with_scratch(|s| self.map_tape.eval_into(p, s, &mut out))?;
        Ok(out)
    }

    /// Row-major Jacobian of the map at `p`.
    pub fn jacobian(&self, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        let n = self.map.len();
        let mut out = vec![0.0; n * n];
        with_scratch(|s| self.jac_tape.eval_into(p, s, &mut out))?;
        Ok(out)
    }

    pub fn apply_inverse(&self, q: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.inverse.iter().map(|e| e.eval(q)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub id: String,
    pub axes: Vec<Axis>,
    pub transitions: Vec<Transition>,
}

impl Chart {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn is_periodic(&self) -> bool {
        self.axes.iter().all(|a| a.periodic)
    }

    /// Wraps periodic coordinates into `[lo, hi)`.
    pub fn wrap(&self, p: &mut [f64]) {
        for (x, a) in p.iter_mut().zip(&self.axes) {
            if a.periodic {
                let w = a.width();
                *x = a.lo + (*x - a.lo).rem_euclid(w);
                if *x >= a.hi {
                    *x = a.lo;
                }
            }
        }
    }

    /// Minimal-image difference `a - b`.
    pub fn diff(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .zip(&self.axes)
            .map(|((x, y), ax)| {
                let d = x - y;
                if ax.periodic {
                    let w = ax.width();
                    d - w * (d / w).round()
                } else {
                    d
                }
            })
            .collect()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        crate::linalg::norm(&self.diff(a, b))
    }

    /// Normalized depth: 1 at the box center, 0 on the boundary, negative
    /// outside. Periodic axes do not constrain.
    pub fn depth(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(&self.axes)
            .filter(|(_, a)| !a.periodic)
            .map(|(x, a)| 1.0 - (x - a.center()).abs() / (0.5 * a.width()))
            .fold(1.0, f64::min)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.depth(p) > 0.0
    }

    pub fn in_inner_box(&self, p: &[f64]) -> bool {
        self.depth(p) > 1.0 - INNER_FRACTION
    }
}
