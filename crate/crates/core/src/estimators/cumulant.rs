use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_replicates, replicate, EstimateReport, SimulationSettings, JACKKNIFE_GROUPS};
use crate::empirical::{
    empirical_point_measure, field_statistic_with_values, LocalFunctionalSpec, Quadrature, TestFunction,
};
use crate::error::{Error, Result};
use crate::functionals::FunctionalSpec;
use crate::geometry::{sample_poisson, TorusGeometry};
use crate::numeric::{jackknife, log_mean_exp, mean, sample_variance};
use crate::streams::{rng_for, tag};

/// Largest fraction of replicates whose exponential moment may overflow.
pub const MAX_FLAGGED_FRACTION: f64 = 1e-3;

// exp(x) overflows f64 above this.
const EXP_OVERFLOW: f64 = 709.78;

/// Settings of a scaled-cumulant scan over `λ` with `α_λ = λ^β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CumulantScanConfig {
    pub beta: f64,
    pub lambda_grid: Vec<f64>,
    pub replicates: usize,
}

impl CumulantScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return Err(Error::param(format!("beta must lie in (0, 1/2), got {}", self.beta)));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(l.is_finite() && *l > 1.0)) {
            return Err(Error::param("lambda grid must be non-empty with values > 1"));
        }
        if self.lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("lambda grid must be increasing"));
        }
        check_replicates(self.replicates, 2 * JACKKNIFE_GROUPS)
    }

    pub fn alpha(&self, lambda: f64) -> f64 {
        lambda.powf(self.beta)
    }
}

/// A scalar statistic of a volume-`λ` system whose fluctuations are probed.
/// `stream` separates independent batches; `rep` indexes replicates within one.
pub trait FluctuationSource: Sync {
    fn sample(&self, lambda: f64, stream: u64, rep: u64) -> Result<f64>;
    fn label(&self) -> String;
}

/// `⟨f, Z_λ⟩` of a simulated Poisson configuration.
pub struct PairingSource {
    pub spec: FunctionalSpec,
    pub f: TestFunction,
    pub sim: SimulationSettings,
    pub seed: u64,
}

impl FluctuationSource for PairingSource {
    fn sample(&self, lambda: f64, stream: u64, rep: u64) -> Result<f64> {
        let g = TorusGeometry::from_volume(self.sim.dimension, lambda)?;
        let mut rng = rng_for(self.seed, tag::with(tag::CONFIG, (1 << 32) | stream), rep);
        let config = sample_poisson(&g, self.sim.intensity, &self.sim.grain, &mut rng)?;
        Ok(empirical_point_measure(&config, &self.spec)?.pair_with(|v| self.f.eval(v)))
    }

    fn label(&self) -> String {
        format!("pairing:{}", self.spec.label())
    }
}

/// `⟨Φ̂, Ψ_λ⟩` by grid quadrature with `nodes_per_volume · λ` nodes.
pub struct FieldSource {
    pub spec: FunctionalSpec,
    pub phi: LocalFunctionalSpec,
    pub nodes_per_volume: f64,
    pub sim: SimulationSettings,
    pub seed: u64,
}

impl FluctuationSource for FieldSource {
    fn sample(&self, lambda: f64, stream: u64, rep: u64) -> Result<f64> {
        let g = TorusGeometry::from_volume(self.sim.dimension, lambda)?;
        let mut rng = rng_for(self.seed, tag::with(tag::CONFIG, (1 << 32) | stream), rep);
        let config = sample_poisson(&g, self.sim.intensity, &self.sim.grain, &mut rng)?;
        let values = empirical_point_measure(&config, &self.spec)?.values;
        let nodes = (self.nodes_per_volume * lambda).ceil().max(1.0) as usize;
        Ok(field_statistic_with_values(&config, &values, &self.phi, Quadrature::Grid, nodes, 0)?.value)
    }

    fn label(&self) -> String {
        format!("field:{}", self.spec.label())
    }
}

/// Synthetic `N(0, v/λ)` statistic, for which the scaled cumulant is `v/2`.
pub struct GaussianSource {
    pub variance: f64,
    pub seed: u64,
}

impl FluctuationSource for GaussianSource {
    fn sample(&self, lambda: f64, stream: u64, rep: u64) -> Result<f64> {
        let mut rng = rng_for(self.seed, tag::with(tag::SYNTHETIC, stream), rep);
        let z: f64 = StandardNormal.sample(&mut rng);
        Ok((self.variance / lambda).sqrt() * z)
    }

    fn label(&self) -> String {
        format!("gaussian:{}", self.variance)
    }
}

/// One `λ` of a cumulant scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulantPoint {
    pub lambda: f64,
    pub alpha: f64,
    /// `(1/α²) log E exp(α √λ (S - E S))`.
    pub cumulant: EstimateReport,
    /// `½ λ Var S` from the same main batch.
    pub half_variance: EstimateReport,
    pub flagged: usize,
}

/// Scaled cumulant generating function along the `λ` grid. The mean used for
/// centering comes from an independent batch of the same size; its
/// uncertainty is included in the standard error.
pub fn estimate_scaled_cumulant<S: FluctuationSource + ?Sized>(
    source: &S,
    ccfg: &CumulantScanConfig,
    seed: u64,
) -> Result<Vec<CumulantPoint>> {
    ccfg.validate()?;
    let n = ccfg.replicates;
    ccfg.lambda_grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let main = replicate(n, |rep| source.sample(lambda, 2 * i as u64, rep))?;
            let centering = replicate(n, |rep| source.sample(lambda, 2 * i as u64 + 1, rep))?;
            let mu = mean(&centering);
            let alpha = ccfg.alpha(lambda);
            let scale = alpha * lambda.sqrt();
            let exponents: Vec<f64> = main.iter().map(|s| scale * (s - mu)).collect();
            let flagged = exponents.iter().filter(|e| !(e.abs() < EXP_OVERFLOW)).count();
            if flagged as f64 > MAX_FLAGGED_FRACTION * n as f64 {
                return Err(Error::Numeric(format!(
                    "{flagged} of {n} exponential moments overflow at lambda = {lambda}"
                )));
            }
            let finite: Vec<f64> = exponents.into_iter().filter(|e| e.is_finite()).collect();
            let a2 = alpha * alpha;
            let jk = jackknife(&finite, JACKKNIFE_GROUPS, |v| log_mean_exp(v) / a2);
            if !jk.estimate.is_finite() {
                return Err(Error::Numeric(format!("non-finite cumulant at lambda = {lambda}")));
            }
            let centering_var = lambda / a2 * sample_variance(&centering) / n as f64;
            let se = (jk.std_error.powi(2) + centering_var).sqrt();
            let cumulant = EstimateReport::new("scaled-cumulant", jk.estimate, se, n, seed)
                .with("lambda", lambda)
                .with("alpha", alpha)
                .with("source", source.label());
            let hv = jackknife(&main, JACKKNIFE_GROUPS, |v| 0.5 * lambda * sample_variance(v));
            let half_variance =
                EstimateReport::new("half-variance", hv.estimate, hv.std_error, n, seed).with("lambda", lambda);
            Ok(CumulantPoint { lambda, alpha, cumulant, half_variance, flagged })
        })
        .collect()
}
