use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_replicates, replicate, EstimateReport, SimulationSettings};
use crate::empirical::TestFunction;
use crate::error::{Error, Result};
use crate::functionals::{FunctionalSpec, TorusEvaluator};
use crate::geometry::{random_point, sample_poisson, MarkedPoint, PointConfiguration, Position, TorusGeometry, MAX_DIM};
use crate::numeric::{compensated_sum, mean, sample_variance, unit_ball_volume};
use crate::streams::{rng_for, tag};

fn default_factor() -> f64 {
    1.0
}

/// Settings of the two-point (pair-correlation) variance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairCorrelationConfig {
    /// Truncation radius of the `dx` integral.
    pub r_max: f64,
    pub n_shells: usize,
    /// Volume of the auxiliary torus the two-point terms are simulated on.
    pub aux_lambda: f64,
    /// Weight of the integral term: 0.5 or 1.0. Both are always reported;
    /// this picks the headline value.
    #[serde(default = "default_factor")]
    pub pair_term_factor: f64,
    /// Configurations for the one-point terms (all points of each are used).
    pub diagonal_replicates: usize,
    /// Configurations for the shell terms (one sample per shell each).
    pub shell_replicates: usize,
}

impl PairCorrelationConfig {
    pub fn validate(&self, dimension: usize) -> Result<()> {
        if !(self.r_max.is_finite() && self.r_max > 0.0) {
            return Err(Error::param("r_max must be positive"));
        }
        if self.n_shells == 0 {
            return Err(Error::param("n_shells must be at least 1"));
        }
        let g = TorusGeometry::from_volume(dimension, self.aux_lambda)?;
        if self.r_max > g.half_side() {
            return Err(Error::param(format!(
                "r_max {} exceeds half the auxiliary torus side {}",
                self.r_max,
                g.half_side()
            )));
        }
        if self.pair_term_factor != 0.5 && self.pair_term_factor != 1.0 {
            return Err(Error::param("pair_term_factor must be 0.5 or 1.0"));
        }
        check_replicates(self.diagonal_replicates, 2)?;
        check_replicates(self.shell_replicates, 2)
    }
}

/// Output of [`estimate_variance_pair`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairVarianceReport {
    /// Estimate under the configured factor.
    pub selected: EstimateReport,
    pub factor_half: EstimateReport,
    pub factor_one: EstimateReport,
    /// `τ E f(ξ)²`.
    pub diagonal_term: EstimateReport,
    /// `τ² ∫ [E f(ξ(0))f(ξ(x)) - (E f(ξ))²] dx`, before the factor.
    pub second_term: EstimateReport,
    /// `E f(ξ(0, P ∪ {0}))`.
    pub mean_f: EstimateReport,
}

/// Uniform point in the shell `r_lo <= |x| < r_hi`.
fn shell_point<R: Rng + ?Sized>(d: usize, r_lo: f64, r_hi: f64, rng: &mut R) -> Position {
    let df = d as f64;
    let u: f64 = rng.random();
    let r = (r_lo.powf(df) + u * (r_hi.powf(df) - r_lo.powf(df))).powf(1.0 / df);
    let mut x = [0.0; MAX_DIM];
    match d {
        1 => x[0] = if rng.random::<bool>() { r } else { -r },
        2 => {
            let a = std::f64::consts::TAU * rng.random::<f64>();
            x[0] = r * a.cos();
            x[1] = r * a.sin();
        }
        _ => {
            let z = 2.0 * rng.random::<f64>() - 1.0;
            let a = std::f64::consts::TAU * rng.random::<f64>();
            let s = (1.0 - z * z).sqrt();
            x = [r * s * a.cos(), r * s * a.sin(), r * z];
        }
    }
    x
}

/// Two-point variance density estimate
/// `τ [E f(ξ)² + c τ ∫_{|x|<r_max} (E f(ξ(0, P∪{x})) f(ξ(x, P∪{0})) - (E f(ξ))²) dx]`
/// for `c ∈ {0.5, 1}`.
///
/// The one-point moments are estimated from every point of torus
/// configurations (ratio estimators); the integral by stratified sampling over
/// `n_shells` equal-width shells.
pub fn estimate_variance_pair(
    spec: &FunctionalSpec,
    f: &TestFunction,
    sim: &SimulationSettings,
    pcfg: &PairCorrelationConfig,
    seed: u64,
) -> Result<PairVarianceReport> {
    spec.validate()?;
    sim.validate()?;
    f.validate()?;
    pcfg.validate(sim.dimension)?;
    let tau = sim.intensity;
    let d = sim.dimension;
    let geometry = TorusGeometry::from_volume(d, pcfg.aux_lambda)?;

    // One-point terms.
    let diag = replicate(pcfg.diagonal_replicates, |rep| {
        let mut rng = rng_for(seed, tag::PAIR_DIAGONAL, rep);
        let config = sample_poisson(&geometry, tau, &sim.grain, &mut rng)?;
        if config.is_empty() {
            return Ok((0.0, 0.0, 0.0));
        }
        let vals = TorusEvaluator::new(&config, spec)?.values()?;
        let a = compensated_sum(vals.iter().map(|&v| f.eval(v)));
        let b = compensated_sum(vals.iter().map(|&v| f.eval(v).powi(2)));
        Ok((vals.len() as f64, a, b))
    })?;
    let n_tot = compensated_sum(diag.iter().map(|t| t.0));
    if n_tot == 0.0 {
        return Err(Error::Numeric("no points in the one-point batch".into()));
    }
    let m = compensated_sum(diag.iter().map(|t| t.1)) / n_tot;
    let dd = compensated_sum(diag.iter().map(|t| t.2)) / n_tot;
    let n_bar = n_tot / diag.len() as f64;
    let za: Vec<f64> = diag.iter().map(|t| (t.1 - m * t.0) / n_bar).collect();
    let zb: Vec<f64> = diag.iter().map(|t| (t.2 - dd * t.0) / n_bar).collect();
    let nd = diag.len() as f64;

    // Shell terms.
    let edges: Vec<f64> = (0..=pcfg.n_shells).map(|k| pcfg.r_max * k as f64 / pcfg.n_shells as f64).collect();
    let kappa = unit_ball_volume(d);
    let vols: Vec<f64> =
        edges.windows(2).map(|w| kappa * (w[1].powi(d as i32) - w[0].powi(d as i32))).collect();
    let ball = compensated_sum(vols.iter().copied());
    let shell_sums = replicate(pcfg.shell_replicates, |rep| {
        let mut rng = rng_for(seed, tag::PAIR_SHELL, rep);
        let base = sample_poisson(&geometry, tau, &sim.grain, &mut rng)?;
        let mut terms = Vec::with_capacity(pcfg.n_shells);
        for k in 0..pcfg.n_shells {
            let x = shell_point(d, edges[k], edges[k + 1], &mut rng);
            let m0 = random_point(&geometry, &sim.grain, &mut rng);
            let mx = random_point(&geometry, &sim.grain, &mut rng);
            let mut pts = Vec::with_capacity(base.len() + 2);
            pts.push(MarkedPoint::new([0.0; MAX_DIM], m0.time_mark, m0.aux_mark));
            pts.push(MarkedPoint::new(x, mx.time_mark, mx.aux_mark));
            pts.extend_from_slice(base.points());
            let config = PointConfiguration::new(geometry, pts)?;
            let ev = TorusEvaluator::new(&config, spec)?;
            terms.push(vols[k] * f.eval(ev.value_at(0)?) * f.eval(ev.value_at(1)?));
        }
        Ok(compensated_sum(terms))
    })?;
    let ns = shell_sums.len() as f64;
    let integral = mean(&shell_sums) - ball * m * m;
    let var_shell = sample_variance(&shell_sums) / ns;

    let diagonal_term = tau * dd;
    let second = tau * tau * integral;
    let diag_se = (tau * tau * sample_variance(&zb) / nd).sqrt();
    let second_se = (tau.powi(4) * (var_shell + 4.0 * ball * ball * m * m * sample_variance(&za) / nd)).sqrt();
    let with_factor = |c: f64| -> EstimateReport {
        let w: Vec<f64> = za.iter().zip(&zb).map(|(a, b)| tau * b - 2.0 * c * tau * tau * ball * m * a).collect();
        let var = c * c * tau.powi(4) * var_shell + sample_variance(&w) / nd;
        EstimateReport::new("variance-pair", diagonal_term + c * second, var.sqrt(), pcfg.shell_replicates, seed)
            .with("pair_term_factor", c)
            .with("r_max", pcfg.r_max)
            .with("aux_lambda", pcfg.aux_lambda)
            .with("n_shells", pcfg.n_shells)
            .with("diagonal_replicates", pcfg.diagonal_replicates)
    };
    let half = with_factor(0.5);
    let one = with_factor(1.0);
    let selected = if pcfg.pair_term_factor == 0.5 { half.clone() } else { one.clone() };
    let mean_se = (sample_variance(&za) / nd).sqrt();
    Ok(PairVarianceReport {
        selected,
        factor_half: half,
        factor_one: one,
        diagonal_term: EstimateReport::new("pair-diagonal-term", diagonal_term, diag_se, pcfg.diagonal_replicates, seed),
        second_term: EstimateReport::new("pair-second-term", second, second_se, pcfg.shell_replicates, seed),
        mean_f: EstimateReport::new("pair-mean-f", m, mean_se, pcfg.diagonal_replicates, seed),
    })
}
