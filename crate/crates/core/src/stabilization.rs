//! Statistical certification of stabilization radii and exponential tail fits.
//!
//! A radius `r` is certified at `x` when `ξ(x, (σ ∩ B_r(x)) ∪ σ')` takes the
//! same value for a fixed battery of external configurations `σ'` supported
//! outside `B_r(x)`: the empty set, `M` independent Poisson(τ) samples and one
//! Poisson(2τ) sample. Externals are drawn once per point on the whole torus
//! and restricted to the complement of each ball, so they are nested across
//! radii. The grid is swept upward and the first certifying radius is kept.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{FunctionalSpec, TorusEvaluator};
use crate::geometry::{sample_poisson, GrainLaw, MarkedPoint, PointConfiguration, TorusGeometry, MAX_DIM};
use crate::streams::{rng_for, tag};

pub const DEFAULT_RESAMPLES: usize = 64;
pub const DEFAULT_GRID_SIZE: usize = 24;
pub const DEFAULT_MIN_COUNT_PER_BIN: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusEstimate {
    pub point: usize,
    pub r_hat: Option<f64>,
    pub grid: Vec<f64>,
    pub resamples_used: usize,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub radii: Vec<f64>,
    pub survival: Vec<f64>,
    pub log_survival: Vec<f64>,
    pub n_exceed: Vec<usize>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub min_count_per_bin: usize,
    pub bins_used: usize,
    pub samples: usize,
}

/// Parameters of the external battery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSettings {
    /// Intensity τ of the random externals.
    pub intensity: f64,
    /// Number `M` of Poisson(τ) externals.
    pub resamples: usize,
    pub seed: u64,
    pub grain: GrainLaw,
}

impl ProbeSettings {
    pub fn new(intensity: f64, seed: u64) -> Self {
        Self { intensity, resamples: DEFAULT_RESAMPLES, seed, grain: GrainLaw::default() }
    }
}

/// `n` geometrically spaced radii from `0.25·τ^{-1/d}` to `L/2`.
pub fn default_grid(geometry: &TorusGeometry, intensity: f64, n: usize) -> Result<Vec<f64>> {
    let d = geometry.dimension() as f64;
    let lo = 0.25 * intensity.powf(-1.0 / d);
    let hi = geometry.half_side();
    if !(intensity > 0.0) || n < 2 || !(lo < hi) {
        return Err(Error::param(format!("cannot build a radius grid from {lo} to {hi} with {n} points")));
    }
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    let mut g: Vec<f64> = (0..n).map(|i| lo * ratio.powi(i as i32)).collect();
    g[n - 1] = hi;
    Ok(g)
}

fn validate_grid(grid: &[f64], geometry: &TorusGeometry) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::param("radius grid is empty"));
    }
    if grid.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::param("radius grid must be finite and non-negative"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("radius grid must be strictly increasing"));
    }
    let top = grid[grid.len() - 1];
    if top > geometry.half_side() {
        return Err(Error::param(format!("largest probe radius {top} exceeds L/2 = {}", geometry.half_side())));
    }
    Ok(())
}

fn external_battery(geometry: &TorusGeometry, x: usize, settings: &ProbeSettings) -> Result<Vec<Vec<MarkedPoint>>> {
    let stream = tag::with(tag::EXTERNAL, x as u64);
    let mut out = Vec::with_capacity(settings.resamples + 2);
    out.push(Vec::new());
    for j in 0..settings.resamples {
        let mut rng = rng_for(settings.seed, stream, j as u64);
        out.push(sample_poisson(geometry, settings.intensity, &settings.grain, &mut rng)?.points().to_vec());
    }
    // Keyed apart from the Poisson(τ) externals so it does not depend on M.
    let mut rng = rng_for(settings.seed, stream, u64::MAX >> 28);
    out.push(sample_poisson(geometry, 2.0 * settings.intensity, &settings.grain, &mut rng)?.points().to_vec());
    Ok(out)
}

/// Value at `x` of `(σ ∩ B_r(x)) ∪ (external \ B_r(x))`; `None` if undefined.
fn value_with_external(
    spec: &FunctionalSpec,
    config: &PointConfiguration,
    x: usize,
    r: f64,
    external: &[MarkedPoint],
) -> Option<f64> {
    let g = config.geometry();
    let xp = *config.position(x);
    let mut pts = Vec::with_capacity(config.len() + external.len());
    pts.push(config.points()[x]);
    pts.extend(config.points().iter().enumerate().filter(|&(i, p)| i != x && g.distance(&xp, &p.position) < r).map(|(_, p)| *p));
    pts.extend(external.iter().filter(|p| g.distance(&xp, &p.position) >= r).copied());
    let combined = PointConfiguration::new(*g, pts).ok()?;
    TorusEvaluator::new(&combined, spec).ok()?.value_at(0).ok()
}

/// Smallest grid radius certified by the external battery.
pub fn estimate_radius(
    spec: &FunctionalSpec,
    config: &PointConfiguration,
    x: usize,
    grid: &[f64],
    settings: &ProbeSettings,
) -> Result<RadiusEstimate> {
    spec.validate()?;
    validate_grid(grid, config.geometry())?;
    if settings.resamples < 2 {
        return Err(Error::param("at least 2 resamples are required"));
    }
    if x >= config.len() {
        return Err(Error::Contract(format!("point id {x} out of range")));
    }
    let battery = external_battery(config.geometry(), x, settings)?;
    let mut r_hat = None;
    'radii: for &r in grid {
        let Some(v0) = value_with_external(spec, config, x, r, &battery[0]) else { continue };
        for ext in &battery[1..] {
            if value_with_external(spec, config, x, r, ext) != Some(v0) {
                continue 'radii;
            }
        }
        r_hat = Some(r);
        break;
    }
    Ok(RadiusEstimate {
        point: x,
        r_hat,
        grid: grid.to_vec(),
        resamples_used: settings.resamples,
        certified: r_hat.is_some(),
    })
}

/// Radius estimates at a point inserted at the origin of `n_points`
/// independent Poisson configurations on a torus of volume `lambda`.
#[allow(clippy::too_many_arguments)]
pub fn sample_radius_distribution(
    spec: &FunctionalSpec,
    intensity: f64,
    lambda: f64,
    dimension: usize,
    n_points: usize,
    grid: &[f64],
    resamples: usize,
    seed: u64,
    grain: &GrainLaw,
) -> Result<Vec<RadiusEstimate>> {
    if n_points == 0 {
        return Err(Error::param("n_points must be at least 1"));
    }
    let geometry = TorusGeometry::from_volume(dimension, lambda)?;
    validate_grid(grid, &geometry)?;
    spec.validate()?;
    (0..n_points)
        .into_par_iter()
        .map(|i| {
            let (config, x) = configuration_with_origin(&geometry, intensity, grain, seed, i as u64)?;
            let settings = ProbeSettings {
                intensity,
                resamples,
                seed: crate::streams::derive_seed(seed, i as u64),
                grain: *grain,
            };
            estimate_radius(spec, &config, x, grid, &settings)
        })
        .collect()
}

/// A Poisson configuration for replicate `rep` with an extra point at the
/// origin; returns the configuration and the origin's id.
pub fn configuration_with_origin(
    geometry: &TorusGeometry,
    intensity: f64,
    grain: &GrainLaw,
    seed: u64,
    rep: u64,
) -> Result<(PointConfiguration, usize)> {
    let mut config = sample_poisson(geometry, intensity, grain, &mut rng_for(seed, tag::CONFIG, rep))?;
    let mut rng = rng_for(seed, tag::INSERT, rep);
    let marks = crate::geometry::random_point(geometry, grain, &mut rng);
    let origin = MarkedPoint::new([0.0; MAX_DIM], marks.time_mark, marks.aux_mark);
    // A sampled point exactly at the origin has probability zero.
    let id = config.insert(origin)?;
    Ok((config, id))
}

/// Least-squares fit of `log P(R > r)` against `r` on the grid.
///
/// Uncertified estimates count as exceeding every grid radius. Bins with
/// fewer than `min_count_per_bin` exceedances are left out of the fit.
pub fn fit_tail(estimates: &[RadiusEstimate], min_count_per_bin: usize) -> Result<TailFit> {
    let first = estimates.first().ok_or_else(|| Error::DegenerateFit("no radius estimates".into()))?;
    let grid = &first.grid;
    if estimates.iter().any(|e| &e.grid != grid) {
        return Err(Error::param("radius estimates use different grids"));
    }
    let certified = estimates.iter().filter(|e| e.certified).count();
    if certified < 50 {
        return Err(Error::DegenerateFit(format!("only {certified} certified estimates, need 50")));
    }
    let n = estimates.len();
    let n_exceed: Vec<usize> = grid
        .iter()
        .map(|&r| estimates.iter().filter(|e| e.r_hat.is_none_or(|h| h > r)).count())
        .collect();
    let survival: Vec<f64> = n_exceed.iter().map(|&c| c as f64 / n as f64).collect();
    let log_survival: Vec<f64> = survival.iter().map(|s| s.ln()).collect();
    let used: Vec<usize> = (0..grid.len()).filter(|&i| n_exceed[i] >= min_count_per_bin.max(1)).collect();
    if used.len() < 2 {
        return Err(Error::DegenerateFit(format!("{} bins with at least {min_count_per_bin} exceedances", used.len())));
    }
    let xs: Vec<f64> = used.iter().map(|&i| grid[i]).collect();
    let ys: Vec<f64> = used.iter().map(|&i| log_survival[i]).collect();
    let (slope, intercept, r_squared) = least_squares(&xs, &ys)?;
    Ok(TailFit {
        radii: grid.clone(),
        survival,
        log_survival,
        n_exceed,
        slope,
        intercept,
        r_squared,
        min_count_per_bin,
        bins_used: used.len(),
        samples: n,
    })
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, R²)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("all fit abscissae coincide".into()));
    }
    if !(syy > 1e-300) {
        return Err(Error::DegenerateFit("log-survival is flat; R² undefined".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok((slope, intercept, 1.0 - ss_res / syy))
}
