use serde::Serialize;

use super::{check_replicates, replicate, EstimateReport, SimulationSettings};
use crate::error::{Error, Result};
use crate::functionals::{FunctionalSpec, TorusEvaluator};
use crate::geometry::TorusGeometry;
use crate::stabilization::configuration_with_origin;

/// Binned empirical law of `ξ(0, P ∪ {0})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueLaw {
    /// Bin `i` is `[edges[i], edges[i+1])`; the last bin is closed.
    pub edges: Vec<f64>,
    pub bins: Vec<EstimateReport>,
    pub mean: EstimateReport,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl ValueLaw {
    /// Fraction of samples equal to `v`, with binomial standard error.
    pub fn probability_of(&self, v: f64) -> EstimateReport {
        let n = self.samples.len();
        let p = self.samples.iter().filter(|&&s| s == v).count() as f64 / n as f64;
        EstimateReport::new(format!("P(xi={v})"), p, (p * (1.0 - p) / n as f64).sqrt(), n, self.mean.base_seed)
    }
}

/// Samples `ξ(0, ·)` at a point inserted at the origin of a Poisson
/// configuration on a probe torus of volume `lambda_probe`.
pub fn estimate_value_law(
    spec: &FunctionalSpec,
    sim: &SimulationSettings,
    lambda_probe: f64,
    replicates: usize,
    bins: usize,
    seed: u64,
) -> Result<ValueLaw> {
    spec.validate()?;
    sim.validate()?;
    check_replicates(replicates, 2)?;
    if bins == 0 {
        return Err(Error::param("bins must be at least 1"));
    }
    let geometry = TorusGeometry::from_volume(sim.dimension, lambda_probe)?;
    let samples = replicate(replicates, |rep| {
        let (config, x) = configuration_with_origin(&geometry, sim.intensity, &sim.grain, seed, rep)?;
        TorusEvaluator::new(&config, spec)?.value_at(x)
    })?;
    let (lo, hi) = spec.value_range(sim.dimension);
    let edges: Vec<f64> = if hi > lo {
        (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
    } else {
        vec![lo, hi]
    };
    let nb = edges.len() - 1;
    let mut counts = vec![0usize; nb];
    for &s in &samples {
        let i = edges[1..].iter().position(|&e| s < e).unwrap_or(nb - 1);
        counts[i] += 1;
    }
    let n = samples.len() as f64;
    let bin_reports = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let p = c as f64 / n;
            EstimateReport::new("bin-probability", p, (p * (1.0 - p) / n).sqrt(), samples.len(), seed)
                .with("lo", edges[i])
                .with("hi", edges[i + 1])
        })
        .collect();
    let mean = EstimateReport::from_samples("value-mean", &samples, seed)
        .with("tau", sim.intensity)
        .with("lambda_probe", lambda_probe)
        .with("functional", spec.label());
    Ok(ValueLaw { edges, bins: bin_reports, mean, samples })
}
