//! Coverage check: random points classified by their two limits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::ModuliError;
use crate::critical::RestPoint;
use crate::flow::{Direction, FlowConfig, StopRule, TraceOptions, Tracer};
use crate::scenario::{ChartPoint, Scenario};

#[derive(Debug, Clone, Serialize)]
pub struct PairFraction {
    /// Backward limit.
    pub from: usize,
    /// Forward limit.
    pub to: usize,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BasinReport {
    pub samples: usize,
    pub classified: usize,
    pub unresolved: Vec<ChartPoint>,
    pub pairs: Vec<PairFraction>,
}

impl BasinReport {
    pub fn complete(&self) -> bool {
        self.classified == self.samples
    }
}

/// Uniform chart samples kept only in their home chart, so overlaps are
/// not counted twice.
fn draw(s: &Scenario, rng: &mut ChaCha8Rng) -> ChartPoint {
    loop {
        let chart = rng.gen_range(0..s.charts.len());
        let p = ChartPoint::new(chart, s.sample_in_chart(chart, rng));
        if s.home(&p).chart == chart {
            return p;
        }
    }
}

fn limits(s: &Scenario, rest: &[RestPoint], cfg: FlowConfig, p: &ChartPoint) -> Result<Option<(usize, usize)>, ModuliError> {
    let tracer = Tracer::new(s, rest, cfg);
    let opts = TraceOptions::default();
    let fwd = tracer.trace(p, &[], Direction::Forward, StopRule::NearRestPoint, &opts)?;
    let bwd = tracer.trace(p, &[], Direction::Backward, StopRule::NearRestPoint, &opts)?;
    Ok(bwd.converged_to().zip(fwd.converged_to()))
}

/// Flows `samples` random points both ways; points left unclassified are
/// retried once with tighter tolerances before being reported.
pub fn basin_partition(
    s: &Scenario,
    rest: &[RestPoint],
    samples: usize,
    seed: u64,
    cfg: FlowConfig,
) -> Result<BasinReport, ModuliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<ChartPoint> = (0..samples).map(|_| draw(s, &mut rng)).collect();
    let results: Vec<Option<(usize, usize)>> = points
        .par_iter()
        .map(|p| match limits(s, rest, cfg, p)? {
            Some(pair) => Ok(Some(pair)),
            None => {
                let tight = FlowConfig { max_time: 10.0 * cfg.max_time, ..cfg.halved() };
                limits(s, rest, tight, p)
            }
        })
        .collect::<Result<_, ModuliError>>()?;
    let m = rest.len();
    let mut counts = vec![0usize; m * m];
    let mut unresolved = Vec::new();
    for (p, r) in points.iter().zip(&results) {
        match r {
            Some((a, b)) => counts[a * m + b] += 1,
            None => unresolved.push(p.clone()),
        }
    }
    let pairs = (0..m * m)
        .filter(|&k| counts[k] > 0)
        .map(|k| PairFraction { from: k / m, to: k % m, count: counts[k], fraction: counts[k] as f64 / samples as f64 })
        .collect();
    Ok(BasinReport { samples, classified: samples - unresolved.len(), unresolved, pairs })
}

/// Limits of a single point, for spot checks.
pub fn classify_point(s: &Scenario, rest: &[RestPoint], cfg: FlowConfig, p: &ChartPoint) -> Result<Option<(usize, usize)>, ModuliError> {
    limits(s, rest, cfg, p)
}
