//! Sampled certificate that `f` strictly decreases along `X`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ChartPoint, Scenario, ScenarioError};

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovCertificate {
    pub samples: usize,
    pub excluded: usize,
    /// Largest observed `df(X)`; must stay below `-margin`.
    pub worst: f64,
    pub margin: f64,
}

/// Samples charts round-robin, skipping balls of `exclusion_radius` around
/// `exclusions`, and rejects the scenario at the first point where
/// `df(X) >= -margin`.
pub fn check_lyapunov(
    scenario: &Scenario,
    samples: usize,
    exclusion_radius: f64,
    exclusions: &[ChartPoint],
    margin: f64,
    seed: u64,
) -> Result<LyapunovCertificate, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cert = LyapunovCertificate { samples: 0, excluded: 0, worst: f64::NEG_INFINITY, margin };
    let charts = scenario.charts.len();
    for k in 0..samples {
        let chart = k % charts;
        let p = ChartPoint::new(chart, scenario.sample_in_chart(chart, &mut rng));
        if exclusions.iter().any(|x| scenario.distance(&p, x) < exclusion_radius) {
            cert.excluded += 1;
            continue;
        }
        let v = scenario.lyapunov_derivative(chart, &p.coords)?;
        cert.samples += 1;
        cert.worst = cert.worst.max(v);
        if v >= -margin {
            return Err(ScenarioError::NonLyapunov {
                chart: scenario.charts[chart].id.clone(),
                point: p.coords,
                value: v,
            });
        }
    }
    Ok(cert)
}
