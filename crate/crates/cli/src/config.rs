//! Experiment configuration: a TOML document with one table per concern.
//! Every field has a default, unknown keys are rejected, and dotted
//! `key=value` overrides are applied before deserialization.

use serde::{Deserialize, Serialize};
use stabfield::empirical::{LocalFunctionalSpec, TestFunction};
use stabfield::estimators::{CumulantScanConfig, PairCorrelationConfig, SimulationSettings};
use stabfield::{FunctionalSpec, GrainLaw};

use crate::error::CliError;

fn default_model() -> FunctionalSpec {
    FunctionalSpec::NnThreshold { threshold: 0.3 }
}

fn default_test_function() -> TestFunction {
    TestFunction::identity_clipped(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_model")]
    pub model: FunctionalSpec,
    #[serde(default)]
    pub process: ProcessSection,
    #[serde(default)]
    pub estimation: EstimationSection,
    #[serde(default = "default_test_function")]
    pub test_function: TestFunction,
    #[serde(default)]
    pub value_law: ValueLawSection,
    #[serde(default)]
    pub pair: PairSection,
    #[serde(default)]
    pub cumulant: CumulantSection,
    #[serde(default)]
    pub radius: RadiusSection,
    #[serde(default)]
    pub rate: RateSection,
    #[serde(default)]
    pub specinfo: SpecinfoSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessSection {
    pub tau: f64,
    pub dimension: usize,
    /// Window volume for single-volume commands.
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    /// Upper bound of the uniform aux-mark law.
    pub grain_bound: f64,
}

impl Default for ProcessSection {
    fn default() -> Self {
        Self { tau: 1.0, dimension: 1, lambda: 1024.0, lambda_grid: vec![256.0, 1024.0, 4096.0], grain_bound: 1.0 }
    }
}

impl ProcessSection {
    pub fn simulation(&self) -> SimulationSettings {
        SimulationSettings { intensity: self.tau, dimension: self.dimension, grain: GrainLaw { t_max: self.grain_bound } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSection {
    pub replicates: usize,
    pub seed: u64,
    /// Thread count; affects wall time only and is left out of the echo.
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self { replicates: 1000, seed: 1, workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueLawSection {
    pub lambda_probe: f64,
    pub bins: usize,
}

impl Default for ValueLawSection {
    fn default() -> Self {
        Self { lambda_probe: 64.0, bins: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairSection {
    pub r_max: f64,
    pub n_shells: usize,
    pub aux_lambda: f64,
    pub pair_term_factor: f64,
    pub diagonal_replicates: usize,
    pub shell_replicates: usize,
}

impl Default for PairSection {
    fn default() -> Self {
        Self {
            r_max: 1.0,
            n_shells: 10,
            aux_lambda: 16.0,
            pair_term_factor: 1.0,
            diagonal_replicates: 10_000,
            shell_replicates: 10_000,
        }
    }
}

impl PairSection {
    pub fn to_core(&self) -> PairCorrelationConfig {
        PairCorrelationConfig {
            r_max: self.r_max,
            n_shells: self.n_shells,
            aux_lambda: self.aux_lambda,
            pair_term_factor: self.pair_term_factor,
            diagonal_replicates: self.diagonal_replicates,
            shell_replicates: self.shell_replicates,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CumulantSourceKind {
    /// `⟨f, Z_λ⟩` with the configured test function.
    Pairing,
    /// `⟨Φ̂, Ψ_λ⟩` with the configured local functional.
    Field,
    /// Synthetic Gaussian with variance `variance / λ`.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CumulantSection {
    pub beta: f64,
    pub lambda_grid: Vec<f64>,
    pub replicates: usize,
    pub source: CumulantSourceKind,
    pub variance: f64,
    pub local: LocalFunctionalSpec,
    pub nodes_per_volume: f64,
}

impl Default for CumulantSection {
    fn default() -> Self {
        Self {
            beta: 0.25,
            lambda_grid: vec![250.0, 1000.0, 4000.0],
            replicates: 2000,
            source: CumulantSourceKind::Pairing,
            variance: 0.05,
            local: LocalFunctionalSpec::CubeCount { cap: 16.0 },
            nodes_per_volume: 4.0,
        }
    }
}

impl CumulantSection {
    pub fn scan(&self) -> CumulantScanConfig {
        CumulantScanConfig { beta: self.beta, lambda_grid: self.lambda_grid.clone(), replicates: self.replicates }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiusSection {
    pub lambda: f64,
    pub n_points: usize,
    pub resamples: usize,
    pub grid_size: usize,
    /// Explicit probe radii; empty selects the default geometric grid.
    pub grid: Vec<f64>,
    pub min_count_per_bin: usize,
}

impl Default for RadiusSection {
    fn default() -> Self {
        Self { lambda: 40.0, n_points: 200, resamples: 64, grid_size: 24, grid: Vec::new(), min_count_per_bin: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSection {
    pub basis: Vec<TestFunction>,
    /// `g_i = ⟨f_i, γ⟩`, one per basis function.
    pub gamma: Vec<f64>,
    pub lambda: f64,
    /// Eigenvalues below `eigen_floor_scale · trace(M) / k` are dropped.
    pub eigen_floor_scale: f64,
}

impl Default for RateSection {
    fn default() -> Self {
        Self {
            basis: vec![
                TestFunction::identity_clipped(1.0),
                TestFunction::Cosine { frequency: std::f64::consts::PI, amplitude: 1.0, phase: 0.5 },
                TestFunction::LogisticBump { center: 0.5, width: 0.25, height: 1.0 },
            ],
            gamma: vec![0.1, -0.05, 0.02],
            lambda: 1024.0,
            eigen_floor_scale: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecinfoSection {
    pub cells: usize,
    pub max_occupancy: usize,
    pub cell_volume: f64,
    pub instances: usize,
    pub perturbations: usize,
}

impl Default for SpecinfoSection {
    fn default() -> Self {
        Self { cells: 4, max_occupancy: 2, cell_volume: 1.0, instances: 20, perturbations: 200 }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key=value` overrides and deserializes.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| invalid(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| invalid(e.to_string()))
    }

    /// Range checks on every section, run before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let core = |e: stabfield::Error| CliError::Core(e);
        self.model.validate().map_err(core)?;
        self.process.simulation().validate().map_err(core)?;
        self.test_function.validate().map_err(core)?;
        let p = &self.process;
        if !(p.lambda.is_finite() && p.lambda > 0.0) {
            return Err(invalid("process.lambda must be positive"));
        }
        if p.lambda_grid.is_empty() || p.lambda_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(invalid("process.lambda_grid must be non-empty and positive"));
        }
        if p.lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("process.lambda_grid must be increasing"));
        }
        if self.estimation.replicates < 2 {
            return Err(invalid("estimation.replicates must be at least 2"));
        }
        if !(self.value_law.lambda_probe > 0.0) || self.value_law.bins == 0 {
            return Err(invalid("value_law.lambda_probe must be positive and bins >= 1"));
        }
        self.pair.to_core().validate(p.dimension).map_err(core)?;
        let c = &self.cumulant;
        c.scan().validate().map_err(core)?;
        if !(c.variance > 0.0 && c.variance.is_finite()) || !(c.nodes_per_volume > 0.0) {
            return Err(invalid("cumulant.variance and cumulant.nodes_per_volume must be positive"));
        }
        c.local.validate().map_err(core)?;
        let r = &self.radius;
        if !(r.lambda > 0.0) || r.n_points == 0 || r.resamples < 2 || r.grid_size < 2 {
            return Err(invalid("radius: lambda > 0, n_points >= 1, resamples >= 2, grid_size >= 2 required"));
        }
        let rt = &self.rate;
        if rt.basis.is_empty() || rt.basis.len() != rt.gamma.len() {
            return Err(invalid("rate.basis must be non-empty and rate.gamma must have one entry per basis function"));
        }
        for f in &rt.basis {
            f.validate().map_err(core)?;
        }
        if !(rt.lambda > 0.0) || !(rt.eigen_floor_scale >= 0.0) || rt.gamma.iter().any(|g| !g.is_finite()) {
            return Err(invalid("rate.lambda must be positive, eigen_floor_scale >= 0 and gamma finite"));
        }
        let s = &self.specinfo;
        if s.cells == 0 || s.max_occupancy == 0 || !(s.cell_volume > 0.0) {
            return Err(invalid("specinfo: cells >= 1, max_occupancy >= 1 and cell_volume > 0 required"));
        }
        Ok(())
    }

    /// TOML rendering of the effective configuration (workers excluded).
    pub fn echo(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| invalid(format!("cannot render configuration: {e}")))
    }
}

/// Applies `a.b.c=value`; the value is read as a TOML literal and falls back
/// to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| invalid(format!("override `{spec}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(invalid(format!("bad override key `{path}`")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| invalid(format!("override path `{path}` crosses a non-table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::from_toml_with_overrides("", &[]).unwrap();
        c.validate().unwrap();
        let echo = c.echo().unwrap();
        let back = ExperimentConfig::from_toml_with_overrides(&echo, &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = ExperimentConfig::from_toml_with_overrides(
            "[model]\nkind = \"packing\"\n",
            &["model.ball_volume=2.5".into(), "process.lambda_grid=[10.0, 20.0]".into()],
        )
        .unwrap();
        assert_eq!(c.model, FunctionalSpec::Packing { ball_volume: 2.5 });
        assert_eq!(c.process.lambda_grid, vec![10.0, 20.0]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_with_overrides("[process]\ntaux = 1.0\n", &[]).is_err());
        assert!(ExperimentConfig::from_toml_with_overrides("", &["nope=1".into()]).is_err());
    }

    #[test]
    fn negative_tau_fails_validation() {
        let c = ExperimentConfig::from_toml_with_overrides("", &["process.tau=-1".into()]).unwrap();
        assert!(c.validate().is_err());
    }
}
