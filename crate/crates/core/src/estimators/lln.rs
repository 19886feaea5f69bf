use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_intensity, check_replicates, replicate, EstimateReport, JACKKNIFE_GROUPS};
use crate::empirical::{empirical_point_measure, TestFunction};
use crate::error::{Error, Result};
use crate::functionals::FunctionalSpec;
use crate::geometry::{sample_poisson, GrainLaw, TorusGeometry};
use crate::numeric::{jackknife, sample_variance};
use crate::streams::{rng_for, tag};

/// The Poisson input: intensity, dimension and aux-mark law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub intensity: f64,
    pub dimension: usize,
    #[serde(default)]
    pub grain: GrainLaw,
}

impl SimulationSettings {
    pub fn new(intensity: f64, dimension: usize) -> Self {
        Self { intensity, dimension, grain: GrainLaw::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check_intensity(self.intensity)?;
        if !(1..=3).contains(&self.dimension) {
            return Err(Error::param(format!("dimension must be 1, 2 or 3, got {}", self.dimension)));
        }
        self.grain.validate()
    }
}

/// `⟨f_j, Z_λ⟩` for several test functions over independent replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingBatch {
    pub lambda: f64,
    /// `values[j][rep]`.
    pub values: Vec<Vec<f64>>,
}

/// Simulates `replicates` configurations on a torus of volume `lambda` and
/// pairs each empirical measure with every test function. `stream` separates
/// independent batches drawn from the same seed.
pub fn sample_pairings(
    spec: &FunctionalSpec,
    fs: &[TestFunction],
    sim: &SimulationSettings,
    lambda: f64,
    replicates: usize,
    seed: u64,
    stream: u64,
) -> Result<PairingBatch> {
    spec.validate()?;
    sim.validate()?;
    for f in fs {
        f.validate()?;
    }
    let geometry = TorusGeometry::from_volume(sim.dimension, lambda)?;
    let rows = replicate(replicates, |rep| {
        let mut rng = rng_for(seed, tag::with(tag::CONFIG, stream), rep);
        let config = sample_poisson(&geometry, sim.intensity, &sim.grain, &mut rng)?;
        let z = empirical_point_measure(&config, spec)?;
        Ok(fs.iter().map(|f| z.pair_with(|v| f.eval(v))).collect::<Vec<f64>>())
    })?;
    let values = (0..fs.len()).into_par_iter().map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    Ok(PairingBatch { lambda, values })
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::param("lambda grid must be non-empty and positive"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("lambda grid must be increasing"));
    }
    Ok(())
}

/// Replicate mean of `⟨f, Z_λ⟩` for each `λ` of the grid.
pub fn estimate_lln(
    spec: &FunctionalSpec,
    f: &TestFunction,
    sim: &SimulationSettings,
    lambda_grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<Vec<EstimateReport>> {
    check_grid(lambda_grid)?;
    check_replicates(replicates, 2)?;
    lambda_grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let batch = sample_pairings(spec, std::slice::from_ref(f), sim, lambda, replicates, seed, i as u64)?;
            Ok(lln_report(&batch.values[0], lambda, seed))
        })
        .collect()
}

pub(crate) fn lln_report(values: &[f64], lambda: f64, seed: u64) -> EstimateReport {
    EstimateReport::from_samples("lln-mean", values, seed).with("lambda", lambda)
}

/// `λ · Var(⟨f, Z_λ⟩)` with a delete-a-group jackknife standard error.
pub(crate) fn variance_report(values: &[f64], lambda: f64, seed: u64) -> EstimateReport {
    let jk = jackknife(values, JACKKNIFE_GROUPS, |v| lambda * sample_variance(v));
    EstimateReport::new("variance-direct", jk.estimate, jk.std_error, values.len(), seed).with("lambda", lambda)
}

/// Direct variance density estimate at each `λ` of the grid.
pub fn estimate_variance_direct(
    spec: &FunctionalSpec,
    f: &TestFunction,
    sim: &SimulationSettings,
    lambda_grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<Vec<EstimateReport>> {
    check_grid(lambda_grid)?;
    check_replicates(replicates, 100)?;
    lambda_grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let batch = sample_pairings(spec, std::slice::from_ref(f), sim, lambda, replicates, seed, i as u64)?;
            Ok(variance_report(&batch.values[0], lambda, seed))
        })
        .collect()
}
