//! Small dense helpers on row-major `&[f64]` matrices.

use nalgebra::{DMatrix, DVector};

/// Determinant of an `n`×`n` row-major matrix.
pub fn det(m: &[f64], n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => DMatrix::from_row_slice(n, n, m).determinant(),
    }
}

/// Solves `A x = b` for square `A`; `None` when singular.
pub fn solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, a);
    m.lu().solve(&DVector::from_column_slice(b)).map(|x| x.as_slice().to_vec())
}

/// Matrix with the given vectors as columns (`n` rows).
pub fn from_columns(cols: &[&[f64]], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// Least-squares coefficients `C` with `B C ≈ V`, columns given as slices.
pub fn least_squares(b: &[&[f64]], v: &[&[f64]], n: usize) -> Option<DMatrix<f64>> {
    let bm = from_columns(b, n);
    let vm = from_columns(v, n);
    let svd = bm.svd(true, true);
    svd.solve(&vm, 1e-14).ok()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram-Schmidt on consecutive length-`n` blocks of `v`.
/// The triangular factor has a positive diagonal, so orientation is kept.
pub fn orthonormalize_blocks(v: &mut [f64], n: usize) {
    let k = v.len() / n;
    for i in 0..k {
        for j in 0..i {
            let (head, tail) = v.split_at_mut(i * n);
            let prev = &head[j * n..(j + 1) * n];
            let cur = &mut tail[..n];
            let d = dot(prev, cur);
            cur.iter_mut().zip(prev).for_each(|(c, p)| *c -= d * p);
        }
        let cur = &mut v[i * n..(i + 1) * n];
        let len = norm(cur);
        if len > 0.0 {
            cur.iter_mut().for_each(|c| *c /= len);
        }
    }
}

/// Orthonormal-free basis of the null space of an `rows`×`cols` row-major
/// matrix, via reduced row echelon form with relative pivot tolerance.
pub fn null_space(a: &[f64], rows: usize, cols: usize, tol: f64) -> Vec<Vec<f64>> {
    let mut m = a.to_vec();
    let scale = m.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (best, val) = (r..rows)
            .map(|i| (i, m[i * cols + c].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol * scale {
            continue;
        }
        for k in 0..cols {
            m.swap(r * cols + k, best * cols + k);
        }
        let p = m[r * cols + c];
        for k in 0..cols {
            m[r * cols + k] /= p;
        }
        for i in 0..rows {
            if i != r {
                let f = m[i * cols + c];
                if f != 0.0 {
                    for k in 0..cols {
                        m[i * cols + k] -= f * m[r * cols + k];
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![0.0; cols];
            v[f] = 1.0;
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[row * cols + f];
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinants() {
        assert_eq!(det(&[2.0, 0.0, 0.0, 3.0], 2), 6.0);
        let m4: Vec<f64> = (0..16).map(|i| if i % 5 == 0 { 2.0 } else { 0.0 }).collect();
        assert!((det(&m4, 4) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn gram_schmidt_keeps_orientation() {
        let mut v = vec![0.0, 2.0, 1.0, 1.0];
        orthonormalize_blocks(&mut v, 2);
        assert!((norm(&v[..2]) - 1.0).abs() < 1e-15);
        assert!(dot(&v[..2], &v[2..]).abs() < 1e-15);
        assert!(det(&[v[0], v[2], v[1], v[3]], 2) < 0.0);
    }

    #[test]
    fn kernel() {
        let ns = null_space(&[1.0, 1.0, 0.0, 0.0, 0.0, 1.0], 2, 3, 1e-12);
        assert_eq!(ns.len(), 1);
        assert_eq!(ns[0], vec![-1.0, 1.0, 0.0]);
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        let b1 = [1.0, 0.0, 0.0];
        let b2 = [0.0, 1.0, 1.0];
        let v = [2.0, 3.0, 3.0];
        let c = least_squares(&[&b1, &b2], &[&v], 3).unwrap();
        assert!((c[(0, 0)] - 2.0).abs() < 1e-12 && (c[(1, 0)] - 3.0).abs() < 1e-12);
    }
}
