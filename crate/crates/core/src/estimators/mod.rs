//! Replicated Monte Carlo estimators of the limit objects: the value law
//! `ν[ξ]`, the law of large numbers, the variance density (direct and
//! pair-correlation routes), scaled cumulants and the finite-basis rate.
//!
//! Replicates run in parallel but each one draws from its own counter-based
//! stream and results are reduced in replicate order, so every estimate is a
//! deterministic function of the seed and the replicate count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{mean, std_error_of_mean};

mod cumulant;
mod lln;
mod pair;
mod rate;
mod value_law;

pub use cumulant::{
    estimate_scaled_cumulant, CumulantPoint, CumulantScanConfig, FieldSource, FluctuationSource, GaussianSource,
    PairingSource, MAX_FLAGGED_FRACTION,
};
pub use lln::{estimate_lln, estimate_variance_direct, sample_pairings, PairingBatch, SimulationSettings};
pub use pair::{estimate_variance_pair, PairCorrelationConfig, PairVarianceReport};
pub use rate::{estimate_gram, pseudo_inverse_floor, rate_quadratic_form, RateBasis};
pub use value_law::{estimate_value_law, ValueLaw};

/// Metadata attached to a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Meta {
    Real(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Meta {
    fn from(v: f64) -> Self {
        Meta::Real(v)
    }
}

impl From<usize> for Meta {
    fn from(v: usize) -> Self {
        Meta::Int(v as i64)
    }
}

impl From<&str> for Meta {
    fn from(v: &str) -> Self {
        Meta::Text(v.to_string())
    }
}

impl From<String> for Meta {
    fn from(v: String) -> Self {
        Meta::Text(v)
    }
}

/// A Monte Carlo estimate with its standard error and provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub label: String,
    pub value: f64,
    pub std_error: f64,
    pub replicates: usize,
    pub base_seed: u64,
    pub metadata: BTreeMap<String, Meta>,
}

impl EstimateReport {
    pub fn new(label: impl Into<String>, value: f64, std_error: f64, replicates: usize, base_seed: u64) -> Self {
        Self { label: label.into(), value, std_error, replicates, base_seed, metadata: BTreeMap::new() }
    }

    /// Mean of `samples` with standard error `s/√n`.
    pub fn from_samples(label: impl Into<String>, samples: &[f64], base_seed: u64) -> Self {
        let se = if samples.len() > 1 { std_error_of_mean(samples) } else { f64::NAN };
        Self::new(label, mean(samples), se, samples.len(), base_seed)
    }

    pub fn with(mut self, key: &str, value: impl Into<Meta>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// `|a - b| / sqrt(se_a² + se_b²)`.
pub fn z_score(a: &EstimateReport, b: &EstimateReport) -> f64 {
    (a.value - b.value).abs() / (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

/// Runs `f` on replicate indices `0..n` in parallel; results come back in
/// index order.
pub fn replicate<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

pub(crate) fn check_replicates(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::param(format!("need at least {min} replicates, got {n}")));
    }
    Ok(())
}

pub(crate) fn check_intensity(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("intensity must be positive, got {tau}")))
    }
}

/// Number of jackknife groups used for variance-type statistics.
pub(crate) const JACKKNIFE_GROUPS: usize = 100;
