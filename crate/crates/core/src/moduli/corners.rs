//! Corner strata of the compactified unstable sets, moduli spaces and
//! trajectory spaces, as chains of rest points.

use serde::Serialize;

use super::Skeleton;

/// `greater[x][y]` holds when some trajectory or broken trajectory runs
/// from `x` down to `y`.
#[derive(Debug, Clone, Serialize)]
pub struct Relation {
    pub greater: Vec<Vec<bool>>,
    /// Direct links: nonempty trajectory space between the two points.
    pub direct: Vec<Vec<bool>>,
}

impl Relation {
    pub fn gt(&self, x: usize, y: usize) -> bool {
        self.greater[x][y]
    }
}

/// Transitive closure of the nonempty trajectory spaces found by the
/// instanton enumeration and the unstable sweeps.
pub fn greater_relation(sk: &Skeleton) -> Relation {
    let m = sk.rest.len();
    let mut direct = vec![vec![false; m]; m];
    for i in &sk.instantons {
        direct[i.from][i.to] = true;
    }
    for w in &sk.sweeps {
        for p in &w.patches {
            direct[w.x][p.to] = true;
        }
        for sep in &w.separatrices {
            direct[w.x][sep.to] = true;
        }
    }
    for b in &sk.branches {
        direct[b.x][b.plus_end] = true;
        direct[b.x][b.minus_end] = true;
    }
    let mut greater = direct.clone();
    for k in 0..m {
        let via = greater[k].clone();
        for row in greater.iter_mut().filter(|row| row[k]) {
            row.iter_mut().zip(&via).for_each(|(g, &v)| *g |= v);
        }
    }
    Relation { greater, direct }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CornerFamily {
    /// Compactified unstable set of the root.
    Unstable,
    /// Compactified stable set of the root.
    Stable,
    /// Compactified moduli space, marked point on one trajectory piece.
    Moduli,
    /// Compactified moduli space, marked point at a rest point of the chain.
    ModuliPrimed,
    /// Compactified trajectory space.
    Trajectories,
}

#[derive(Debug, Clone, Serialize)]
pub struct CornerStratum {
    pub family: CornerFamily,
    pub depth: usize,
    /// Rest points from the top of the chain down.
    pub chain: Vec<usize>,
    /// Instanton counts on gap-one links (1 for larger gaps).
    pub link_counts: Vec<usize>,
    pub multiplicity: usize,
    /// Sum of the factor dimensions.
    pub dimension: isize,
    /// Ambient dimension minus depth.
    pub expected_dimension: isize,
    /// Marked piece (unprimed moduli) or marked chain position (primed).
    pub marker: Option<usize>,
}

impl CornerStratum {
    pub fn dimension_ok(&self) -> bool {
        self.dimension == self.expected_dimension
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CornerRoot {
    Unstable(usize),
    Stable(usize),
    Pair(usize, usize),
}

fn link_count(sk: &Skeleton, rel: &Relation, a: usize, b: usize) -> Option<usize> {
    let g = sk.rest[a].index as isize - sk.rest[b].index as isize;
    if g == 1 {
        let c = sk.between(a, b).count();
        (c > 0).then_some(c)
    } else if g >= 2 && rel.gt(a, b) {
        Some(1)
    } else {
        None
    }
}

/// Descending chains from `top` with exactly `links` links, optionally
/// forced to end at `bottom`.
fn chains(sk: &Skeleton, rel: &Relation, top: usize, links: usize, bottom: Option<usize>) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    let mut stack = vec![(vec![top], Vec::new())];
    while let Some((chain, counts)) = stack.pop() {
        let last = *chain.last().expect("nonempty chain");
        if chain.len() == links + 1 {
            if bottom.is_none_or(|b| b == last) {
                out.push((chain, counts));
            }
            continue;
        }
        for next in 0..sk.rest.len() {
            if let Some(c) = link_count(sk, rel, last, next) {
                if bottom.is_some_and(|b| next != b && !rel.gt(next, b)) {
                    continue;
                }
                let mut ch = chain.clone();
                ch.push(next);
                let mut cs = counts.clone();
                cs.push(c);
                stack.push((ch, cs));
            }
        }
    }
    out.sort();
    out
}

fn gaps(sk: &Skeleton, chain: &[usize]) -> Vec<isize> {
    chain.windows(2).map(|w| sk.rest[w[0]].index as isize - sk.rest[w[1]].index as isize).collect()
}

/// All corner strata of depth at least one for the given root.
pub fn corner_catalog(sk: &Skeleton, root: CornerRoot) -> Vec<CornerStratum> {
    let rel = greater_relation(sk);
    let n = sk.rest.first().map_or(0, |r| r.dim()) as isize;
    let m = sk.rest.len();
    let idx = |x: usize| sk.rest[x].index as isize;
    let mut out = Vec::new();
    let stratum = |family, depth: usize, chain: Vec<usize>, link_counts: Vec<usize>, dimension, expected, marker| CornerStratum {
        family,
        depth,
        multiplicity: link_counts.iter().product(),
        chain,
        link_counts,
        dimension,
        expected_dimension: expected,
        marker,
    };
    match root {
        CornerRoot::Unstable(x) => {
            for k in 1..m {
                for (chain, counts) in chains(sk, &rel, x, k, None) {
                    let last = *chain.last().expect("chain");
                    let dim = gaps(sk, &chain).iter().map(|g| g - 1).sum::<isize>() + idx(last);
                    out.push(stratum(CornerFamily::Unstable, k, chain, counts, dim, idx(x) - k as isize, None));
                }
            }
        }
        CornerRoot::Stable(x) => {
            for k in 1..m {
                for top in 0..m {
                    for (chain, counts) in chains(sk, &rel, top, k, Some(x)) {
                        let dim = gaps(sk, &chain).iter().map(|g| g - 1).sum::<isize>() + (n - idx(top));
                        out.push(stratum(CornerFamily::Stable, k, chain, counts, dim, n - idx(x) - k as isize, None));
                    }
                }
            }
        }
        CornerRoot::Pair(x, y) => {
            if !rel.gt(x, y) {
                return out;
            }
            let total = idx(x) - idx(y);
            for k in 1..m {
                for (chain, counts) in chains(sk, &rel, x, k + 1, Some(y)) {
                    let g = gaps(sk, &chain);
                    let base: isize = g.iter().map(|g| g - 1).sum();
                    for piece in 0..=k {
                        out.push(stratum(CornerFamily::Moduli, k, chain.clone(), counts.clone(), base + 1, total - k as isize, Some(piece)));
                    }
                    out.push(stratum(CornerFamily::Trajectories, k, chain, counts, base, total - 1 - k as isize, None));
                }
                for (chain, counts) in chains(sk, &rel, x, k, Some(y)) {
                    let base: isize = gaps(sk, &chain).iter().map(|g| g - 1).sum();
                    for pos in 0..chain.len() {
                        out.push(stratum(CornerFamily::ModuliPrimed, k, chain.clone(), counts.clone(), base, total - k as isize, Some(pos)));
                    }
                }
            }
        }
    }
    out
}
