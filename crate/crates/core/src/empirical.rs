//! Empirical point measures `Z_λ` and point-field statistics `⟨Φ̂, Ψ_λ⟩`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{FunctionalSpec, TorusEvaluator};
use crate::geometry::{PointConfiguration, Position, MAX_DIM};
use crate::numeric::{compensated_sum, mean, sample_variance};
use crate::spatial_index::NeighborIndex;
use crate::streams::{rng_for, tag};

/// Bounded continuous test functions `f: R → R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunction {
    /// `min(max(v^p, -B), B)`.
    ClippedPolynomial { power: u32, bound: f64 },
    /// `height · 4 s(z) (1 - s(z))` with `s` the logistic function and
    /// `z = (v - center) / width`; peaks at `height` when `v = center`.
    LogisticBump { center: f64, width: f64, height: f64 },
    /// `amplitude · cos(frequency · v + phase)`.
    Cosine { frequency: f64, amplitude: f64, phase: f64 },
    Constant { value: f64 },
}

impl TestFunction {
    pub fn one() -> Self {
        TestFunction::Constant { value: 1.0 }
    }

    pub fn identity_clipped(bound: f64) -> Self {
        TestFunction::ClippedPolynomial { power: 1, bound }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("test function {name} must be finite")))
            }
        };
        match *self {
            TestFunction::ClippedPolynomial { bound, .. } => {
                if bound.is_finite() && bound >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::param("clip bound must be finite and >= 0"))
                }
            }
            TestFunction::LogisticBump { center, width, height } => {
                finite("center", center)?;
                finite("height", height)?;
                if width.is_finite() && width > 0.0 {
                    Ok(())
                } else {
                    Err(Error::param("logistic width must be positive"))
                }
            }
            TestFunction::Cosine { frequency, amplitude, phase } => {
                finite("frequency", frequency)?;
                finite("amplitude", amplitude)?;
                finite("phase", phase)
            }
            TestFunction::Constant { value } => finite("value", value),
        }
    }

    pub fn eval(&self, v: f64) -> f64 {
        match *self {
            TestFunction::ClippedPolynomial { power, bound } => {
                let p = if power == 0 { 1.0 } else { v.powi(power as i32) };
                p.clamp(-bound, bound)
            }
            TestFunction::LogisticBump { center, width, height } => {
                let s = 1.0 / (1.0 + (-(v - center) / width).exp());
                height * 4.0 * s * (1.0 - s)
            }
            TestFunction::Cosine { frequency, amplitude, phase } => amplitude * (frequency * v + phase).cos(),
            TestFunction::Constant { value } => value,
        }
    }

    /// `sup_v |f(v)|`.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            TestFunction::ClippedPolynomial { power: 0, bound } => bound.min(1.0),
            TestFunction::ClippedPolynomial { bound, .. } => bound,
            TestFunction::LogisticBump { height, .. } => height.abs(),
            TestFunction::Cosine { frequency, amplitude, .. } => {
                if frequency == 0.0 {
                    // Constant `amplitude·cos(phase)`; handled exactly by eval.
                    self.eval(0.0).abs()
                } else {
                    amplitude.abs()
                }
            }
            TestFunction::Constant { value } => value.abs(),
        }
    }
}

/// Atoms `(ξ(x), 1/λ)` of the empirical point measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    pub values: Vec<f64>,
    pub lambda: f64,
}

impl EmpiricalMeasure {
    pub fn zero(lambda: f64) -> Self {
        Self { values: Vec::new(), lambda }
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.lambda
    }

    pub fn total_weight(&self) -> f64 {
        self.values.len() as f64 / self.lambda
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let w = self.weight();
        self.values.iter().map(move |&v| (v, w))
    }

    /// `Σ weight·f(value)` for an arbitrary function.
    pub fn pair_with<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        compensated_sum(self.values.iter().map(|&v| f(v))) / self.lambda
    }
}

/// `⟨f, Z⟩`.
pub fn pair_with_test(f: &TestFunction, z: &EmpiricalMeasure) -> f64 {
    z.pair_with(|v| f.eval(v))
}

/// `Z_λ` of a configuration, each atom evaluated on the periodic extension.
pub fn empirical_point_measure(config: &PointConfiguration, spec: &FunctionalSpec) -> Result<EmpiricalMeasure> {
    let lambda = config.geometry().volume();
    if config.is_empty() {
        spec.validate()?;
        return Ok(EmpiricalMeasure::zero(lambda));
    }
    let values = TorusEvaluator::new(config, spec)?.values()?;
    Ok(EmpiricalMeasure { values, lambda })
}

pub fn center(value: f64, mean_estimate: f64) -> f64 {
    value - mean_estimate
}

/// A point of a ξ-marked patch, relative to the evaluation location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkedValue {
    pub offset: Position,
    pub value: f64,
}

/// A bounded local functional `Φ̂` of the ξ-marked configuration around the
/// origin. Implementations only look at points within `support_radius`.
pub trait LocalFunctional: Sync {
    fn support_radius(&self, dimension: usize) -> f64;
    fn bound(&self) -> f64;
    fn evaluate(&self, dimension: usize, patch: &[MarkedValue]) -> f64;
}

fn in_unit_cube(offset: &Position, d: usize) -> bool {
    offset.iter().take(d).all(|&c| (0.0..1.0).contains(&c))
}

/// Shipped local functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LocalFunctionalSpec {
    /// Number of points in the unit cube `[0,1)^d`, capped at `cap`.
    CubeCount { cap: f64 },
    /// `Σ f(ξ)` over points in the unit cube, clipped to `[-bound, bound]`.
    ClippedMarkSum { f: TestFunction, bound: f64 },
    /// 1 iff at least `min_count` points within `radius` carry ξ-value `value`.
    MarkPattern { radius: f64, value: f64, min_count: usize },
}

impl LocalFunctionalSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LocalFunctionalSpec::CubeCount { cap } if *cap >= 0.0 && cap.is_finite() => Ok(()),
            LocalFunctionalSpec::ClippedMarkSum { f, bound } if *bound >= 0.0 && bound.is_finite() => f.validate(),
            LocalFunctionalSpec::MarkPattern { radius, value, .. } if *radius > 0.0 && value.is_finite() => Ok(()),
            _ => Err(Error::param(format!("invalid local functional {self:?}"))),
        }
    }
}

impl LocalFunctional for LocalFunctionalSpec {
    fn support_radius(&self, dimension: usize) -> f64 {
        match self {
            LocalFunctionalSpec::CubeCount { .. } | LocalFunctionalSpec::ClippedMarkSum { .. } => {
                (dimension as f64).sqrt()
            }
            LocalFunctionalSpec::MarkPattern { radius, .. } => *radius,
        }
    }

    fn bound(&self) -> f64 {
        match self {
            LocalFunctionalSpec::CubeCount { cap } => *cap,
            LocalFunctionalSpec::ClippedMarkSum { bound, .. } => *bound,
            LocalFunctionalSpec::MarkPattern { .. } => 1.0,
        }
    }

    fn evaluate(&self, d: usize, patch: &[MarkedValue]) -> f64 {
        match self {
            LocalFunctionalSpec::CubeCount { cap } => {
                (patch.iter().filter(|p| in_unit_cube(&p.offset, d)).count() as f64).min(*cap)
            }
            LocalFunctionalSpec::ClippedMarkSum { f, bound } => {
                let s = compensated_sum(patch.iter().filter(|p| in_unit_cube(&p.offset, d)).map(|p| f.eval(p.value)));
                s.clamp(-bound, *bound)
            }
            LocalFunctionalSpec::MarkPattern { radius, value, min_count } => {
                let hits = patch
                    .iter()
                    .filter(|p| crate::geometry::norm(&p.offset) < *radius && (p.value - value).abs() <= 1e-9)
                    .count();
                f64::from(u8::from(hits >= *min_count))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    Grid,
    MonteCarlo,
}

/// Quadrature estimate of `⟨Φ̂, Ψ_λ⟩` with the standard error of the mean
/// over quadrature nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldStatistic {
    pub value: f64,
    pub std_error: f64,
    pub nodes: usize,
}

/// Default number of quadrature nodes, `4^d · N`.
pub fn default_nodes(config: &PointConfiguration) -> usize {
    4usize.pow(config.geometry().dimension() as u32) * config.len().max(1)
}

/// Averages `Φ̂` over `nodes` locations `x` of the torus, applied to the
/// ξ-marked configuration shifted by `-x`. Grid quadrature rounds `nodes` up
/// to a full `n^d` lattice.
pub fn field_statistic<P: LocalFunctional + ?Sized>(
    config: &PointConfiguration,
    spec: &FunctionalSpec,
    phi: &P,
    quadrature: Quadrature,
    nodes: usize,
    seed: u64,
) -> Result<FieldStatistic> {
    let values = empirical_point_measure(config, spec)?.values;
    field_statistic_with_values(config, &values, phi, quadrature, nodes, seed)
}

/// [`field_statistic`] with precomputed ξ-values.
pub fn field_statistic_with_values<P: LocalFunctional + ?Sized>(
    config: &PointConfiguration,
    values: &[f64],
    phi: &P,
    quadrature: Quadrature,
    nodes: usize,
    seed: u64,
) -> Result<FieldStatistic> {
    let g = config.geometry();
    let d = g.dimension();
    if nodes == 0 {
        return Err(Error::param("need at least one quadrature node"));
    }
    let radius = phi.support_radius(d);
    if radius > g.half_side() {
        return Err(Error::param(format!("support radius {radius} exceeds L/2 = {}", g.half_side())));
    }
    if values.len() != config.len() {
        return Err(Error::Contract("one ξ-value per point required".into()));
    }
    let index = NeighborIndex::build(config, crate::spatial_index::default_cell_size(g, config.len(), radius))?;
    let locations: Vec<Position> = match quadrature {
        Quadrature::Grid => {
            let n = (nodes as f64).powf(1.0 / d as f64).ceil() as usize;
            let n = (n..).find(|m| m.pow(d as u32) >= nodes).unwrap();
            let step = g.side_length() / n as f64;
            (0..n.pow(d as u32))
                .map(|k| {
                    let mut x = [0.0; MAX_DIM];
                    let mut rem = k;
                    for c in x.iter_mut().take(d) {
                        *c = -g.half_side() + ((rem % n) as f64 + 0.5) * step;
                        rem /= n;
                    }
                    x
                })
                .collect()
        }
        Quadrature::MonteCarlo => {
            let mut rng = rng_for(seed, tag::QUADRATURE, 0);
            (0..nodes)
                .map(|_| {
                    let mut x = [0.0; MAX_DIM];
                    for c in x.iter_mut().take(d) {
                        *c = g.wrap_coordinate(-g.half_side() + g.side_length() * rng.random::<f64>());
                    }
                    x
                })
                .collect()
        }
    };
    let mut patch = Vec::new();
    let samples: Vec<f64> = locations
        .iter()
        .map(|x| {
            patch.clear();
            index.for_each_within(x, radius, |id, _| {
                patch.push(MarkedValue { offset: g.displacement(x, config.position(id)), value: values[id] });
            });
            phi.evaluate(d, &patch)
        })
        .collect();
    let q = samples.len();
    let se = if q > 1 { (sample_variance(&samples) / q as f64).sqrt() } else { 0.0 };
    Ok(FieldStatistic { value: mean(&samples), std_error: se, nodes: q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_poisson_seeded, GrainLaw, TorusGeometry};

    #[test]
    fn test_function_values_and_norms() {
        let f = TestFunction::ClippedPolynomial { power: 2, bound: 3.0 };
        assert_eq!(f.eval(1.5), 2.25);
        assert_eq!(f.eval(-4.0), 3.0);
        assert_eq!(f.sup_norm(), 3.0);
        let b = TestFunction::LogisticBump { center: 1.0, width: 0.5, height: 2.0 };
        assert!((b.eval(1.0) - 2.0).abs() < 1e-15);
        assert!(b.eval(5.0).abs() < 2.0);
        let c = TestFunction::Cosine { frequency: 2.0, amplitude: -1.5, phase: 0.3 };
        assert_eq!(c.sup_norm(), 1.5);
    }

    #[test]
    fn empty_configuration_gives_zero_measure() {
        let g = TorusGeometry::new(2, 4.0).unwrap();
        let z = empirical_point_measure(&PointConfiguration::empty(g), &FunctionalSpec::Packing { ball_volume: 1.0 })
            .unwrap();
        assert_eq!(z.total_weight(), 0.0);
        assert_eq!(pair_with_test(&TestFunction::one(), &z), 0.0);
    }

    #[test]
    fn constant_functional_collapses() {
        let g = TorusGeometry::new(2, 6.0).unwrap();
        let c = sample_poisson_seeded(&g, 2.0, &GrainLaw::default(), 5).unwrap();
        let z = empirical_point_measure(&c, &FunctionalSpec::Constant { value: 0.7 }).unwrap();
        let f = TestFunction::Cosine { frequency: 1.0, amplitude: 1.0, phase: 0.0 };
        let expected = 0.7f64.cos() * c.len() as f64 / 36.0;
        assert!((pair_with_test(&f, &z) - expected).abs() < 1e-14);
        assert!((pair_with_test(&TestFunction::one(), &z) - z.total_weight()).abs() < 1e-15);
    }

    #[test]
    fn centering() {
        assert_eq!(center(5.0, 3.0), 2.0);
        let x = 0.1234;
        assert_eq!(center(x, x), 0.0);
    }

    #[test]
    fn support_radius_checked() {
        let g = TorusGeometry::new(1, 1.5).unwrap();
        let c = sample_poisson_seeded(&g, 2.0, &GrainLaw::default(), 5).unwrap();
        let phi = LocalFunctionalSpec::MarkPattern { radius: 1.0, value: 1.0, min_count: 1 };
        let r = field_statistic(&c, &FunctionalSpec::Constant { value: 1.0 }, &phi, Quadrature::Grid, 10, 1);
        assert!(matches!(r, Err(Error::Parameter(_))));
    }
}
