//! Gauss-Legendre rules and endpoint grading.

/// Nodes and weights of the `order`-point Gauss-Legendre rule on `[0, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order > 0, "quadrature order must be positive");
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Fraction of each half-interval given to the logarithmically graded piece.
const GRADED_FRACTION: f64 = 0.125;

/// Rule on `[a, b]` for integrands that are smooth inside but may behave
/// like `c0 + c1 ln δ` at offset `δ` from either end. Each half splits into
/// a piece next to its end, integrated in `ln δ` from `ln min_offset` with
/// `order` nodes, and a plain Gauss piece of `order / 2` nodes. Mass closer
/// than `min_offset` to an end is estimated by extending the line in `ln δ`
/// through the two innermost nodes, folded into their weights.
pub fn geometric_rule(a: f64, b: f64, order: usize, min_offset: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let cut = GRADED_FRACTION * half;
    let (x, w) = gauss_legendre(order);
    let (lo, hi) = (min_offset.min(cut).ln(), cut.ln());
    let span = hi - lo;
    let mut side: Vec<(f64, f64)> = x
        .iter()
        .zip(&w)
        .map(|(&s, &wi)| {
            let d = (lo + span * s).exp();
            (d, wi * span * d)
        })
        .collect();
    if side.len() >= 2 && span > 0.0 {
        // ∫_0^m (c0 + c1 ln δ) dδ = m (c0 + c1 (ln m - 1))
        let m = lo.exp();
        let (l1, l2) = (side[0].0.ln(), side[1].0.ln());
        let at = lo - 1.0;
        side[0].1 += m * (l2 - at) / (l2 - l1);
        side[1].1 += m * (at - l1) / (l2 - l1);
    }
    let (xm, wm) = gauss_legendre((order / 2).max(1));
    side.extend(xm.iter().zip(&wm).map(|(&s, &wi)| (cut + (half - cut) * s, wi * (half - cut))));
    let mut out: Vec<(f64, f64)> = side.iter().map(|&(d, wt)| (a + d, wt)).collect();
    out.extend(side.iter().rev().map(|&(d, wt)| (b - d, wt)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for order in [1, 2, 5, 8, 32, 64] {
            let (x, w) = gauss_legendre(order);
            for deg in 0..(2 * order) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = 1.0 / (deg as f64 + 1.0);
                assert!((q - exact).abs() < 1e-13, "order {order} degree {deg}: {q}");
            }
        }
    }

    #[test]
    fn nodes_are_sorted_and_symmetric() {
        let (x, w) = gauss_legendre(7);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        assert!((x[3] - 0.5).abs() < 1e-15);
        assert!((w[0] - w[6]).abs() < 1e-15);
    }

    #[test]
    fn geometric_rule_handles_endpoint_singularities() {
        // integral of -ln(s) over (0,1) is 1; the tail below the cutoff is exact
        let q = |order, cut| geometric_rule(0.0, 1.0, order, cut).iter().map(|(s, w)| -s.ln() * w).sum::<f64>();
        assert!((q(32, 1e-14) - 1.0).abs() < 1e-8, "{}", q(32, 1e-14));
        assert!((q(64, 1e-14) - 1.0).abs() < 1e-12, "{}", q(64, 1e-14));
        assert!((q(64, 1e-6) - 1.0).abs() < 1e-12, "{}", q(64, 1e-6));
        // ln(s) ln(1 - s) over (0,1) is 2 - pi^2/6; the tail misses only O(m^2 ln m)
        let exact = 2.0 - std::f64::consts::PI.powi(2) / 6.0;
        let g: f64 = geometric_rule(0.0, 1.0, 64, 1e-6).iter().map(|(s, w)| w * s.ln() * (1.0 - s).ln()).sum();
        assert!((g - exact).abs() < 1e-10, "{g}");
        // s^(-1/2) over (0,1) is 2; the logarithmic tail model is only approximate here
        let r: f64 = geometric_rule(0.0, 1.0, 32, 1e-14).iter().map(|(s, w)| w / s.sqrt()).sum();
        assert!((r - 2.0).abs() < 1e-6, "{r}");
        let nodes = geometric_rule(0.0, 1.0, 8, 1e-14);
        assert!(nodes.windows(2).all(|p| p[0].0 < p[1].0));
    }
}
