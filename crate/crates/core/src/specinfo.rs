//! Exact finite-state checks of the specific-information identities.
//!
//! The configuration space of a window is replaced by occupancy vectors
//! `{0..K}^n` over `n` cells, with reference law `π` the product of
//! Poisson(τ v) laws truncated to `{0..K}` and renormalized. Densities of null
//! measures and bounded observables are plain vectors indexed by state; state
//! indices are mixed-radix with cell 0 the least significant digit.

use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::streams::{rng_for, tag};

/// Largest number of enumerated states.
pub const MAX_STATES: usize = 10_000_000;

/// Identity tolerance for spaces below [`LARGE_SPACE`] states.
pub const TOLERANCE: f64 = 1e-12;
pub const LARGE_SPACE_TOLERANCE: f64 = 1e-10;
pub const LARGE_SPACE: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteConfigSpace {
    pub n_cells: usize,
    pub max_occupancy: usize,
    pub cell_volume: f64,
    pub intensity: f64,
    /// Truncated Poisson law of one cell on `{0..K}`.
    pub cell_law: Vec<f64>,
    #[serde(skip)]
    pi: Vec<f64>,
}

impl DiscreteConfigSpace {
    pub fn new(n_cells: usize, max_occupancy: usize, cell_volume: f64, intensity: f64) -> Result<Self> {
        if n_cells == 0 || max_occupancy == 0 {
            return Err(Error::param("need at least one cell and occupancy bound >= 1"));
        }
        if !(cell_volume.is_finite() && cell_volume > 0.0 && intensity.is_finite() && intensity > 0.0) {
            return Err(Error::param("cell volume and intensity must be positive"));
        }
        let states = state_count(n_cells, max_occupancy)?;
        let mu = intensity * cell_volume;
        let mut w = Vec::with_capacity(max_occupancy + 1);
        let mut term = 1.0;
        for k in 0..=max_occupancy {
            if k > 0 {
                term *= mu / k as f64;
            }
            w.push(term);
        }
        let z = compensated_sum(w.iter().copied());
        let cell_law: Vec<f64> = w.iter().map(|x| x / z).collect();
        let base = max_occupancy + 1;
        let pi = (0..states)
            .map(|s| {
                let mut rem = s;
                let mut p = 1.0;
                for _ in 0..n_cells {
                    p *= cell_law[rem % base];
                    rem /= base;
                }
                p
            })
            .collect();
        Ok(Self { n_cells, max_occupancy, cell_volume, intensity, cell_law, pi })
    }

    pub fn states(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn tolerance(&self) -> f64 {
        if self.states() < LARGE_SPACE {
            TOLERANCE
        } else {
            LARGE_SPACE_TOLERANCE
        }
    }

    /// Occupancy of `cell` in state `s`.
    pub fn occupancy(&self, s: usize, cell: usize) -> usize {
        (s / (self.max_occupancy + 1).pow(cell as u32)) % (self.max_occupancy + 1)
    }

    /// `Σ_s a(s) π(s)`.
    pub fn expect(&self, a: &[f64]) -> f64 {
        compensated_sum(a.iter().zip(&self.pi).map(|(x, p)| x * p))
    }

    /// Same cell law on a different number of cells.
    pub fn with_cells(&self, n_cells: usize) -> Result<Self> {
        Self::new(n_cells, self.max_occupancy, self.cell_volume, self.intensity)
    }
}

fn state_count(n_cells: usize, k: usize) -> Result<usize> {
    let mut s: usize = 1;
    for _ in 0..n_cells {
        s = s.checked_mul(k + 1).filter(|&v| v <= MAX_STATES).ok_or_else(|| {
            Error::param(format!("({})^{n_cells} states exceed the enumeration bound {MAX_STATES}", k + 1))
        })?;
    }
    Ok(s)
}

/// Density `ρ = dΘ/dΠ` of a null measure: `Σ ρ π = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullDensity {
    pub rho: Vec<f64>,
}

impl NullDensity {
    /// Projects an arbitrary vector onto the null densities by subtracting
    /// its `π`-mean.
    pub fn project(space: &DiscreteConfigSpace, raw: Vec<f64>) -> Result<Self> {
        check_len(space, &raw)?;
        let m = space.expect(&raw);
        Ok(Self { rho: raw.into_iter().map(|v| v - m).collect() })
    }

    /// Accepts `rho` if its `π`-mean vanishes to the space tolerance.
    pub fn new(space: &DiscreteConfigSpace, rho: Vec<f64>) -> Result<Self> {
        check_len(space, &rho)?;
        let m = space.expect(&rho);
        if m.abs() > space.tolerance() {
            return Err(Error::Contract(format!("density has total mass {m}, not a null measure")));
        }
        Ok(Self { rho })
    }

    pub fn zero(space: &DiscreteConfigSpace) -> Self {
        Self { rho: vec![0.0; space.states()] }
    }
}

/// A bounded function of the state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundedObservable {
    pub phi: Vec<f64>,
    pub bound: f64,
}

impl BoundedObservable {
    pub fn new(space: &DiscreteConfigSpace, phi: Vec<f64>) -> Result<Self> {
        check_len(space, &phi)?;
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("observable must be finite"));
        }
        let bound = phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(Self { phi, bound })
    }
}

fn check_len(space: &DiscreteConfigSpace, v: &[f64]) -> Result<()> {
    if v.len() != space.states() {
        return Err(Error::Contract(format!("vector has {} entries, space has {} states", v.len(), space.states())));
    }
    Ok(())
}

/// `I(Θ|Π) = ½ Σ ρ² π`.
pub fn information(space: &DiscreteConfigSpace, rho: &NullDensity) -> f64 {
    0.5 * compensated_sum(rho.rho.iter().zip(space.pi()).map(|(r, p)| r * r * p))
}

fn pairing(space: &DiscreteConfigSpace, phi: &[f64], rho: &[f64]) -> f64 {
    compensated_sum(phi.iter().zip(rho).zip(space.pi()).map(|((f, r), p)| f * r * p))
}

fn half_variance(space: &DiscreteConfigSpace, phi: &[f64]) -> f64 {
    let m = space.expect(phi);
    0.5 * compensated_sum(phi.iter().zip(space.pi()).map(|(f, p)| (f - m) * (f - m) * p))
}

/// `⟨Φ, Θ⟩ - I(Θ|Π)`.
pub fn var_objective(space: &DiscreteConfigSpace, phi: &BoundedObservable, rho: &NullDensity) -> f64 {
    pairing(space, &phi.phi, &rho.rho) - information(space, rho)
}

/// `⟨Φ, Θ⟩ - ½ Var Φ`.
pub fn info_objective(space: &DiscreteConfigSpace, phi: &BoundedObservable, rho: &NullDensity) -> f64 {
    pairing(space, &phi.phi, &rho.rho) - half_variance(space, &phi.phi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarVariational {
    pub half_var: f64,
    pub sup_value: f64,
    pub optimizer: NullDensity,
    /// Largest objective among the random perturbations of the optimizer.
    pub best_perturbed: f64,
    pub perturbations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfoVariational {
    pub info: f64,
    pub sup_value: f64,
    pub optimizer: BoundedObservable,
    pub best_perturbed: f64,
    pub perturbations: usize,
}

fn random_vector<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

/// `½ Var Φ = sup_Θ (⟨Φ, Θ⟩ - I(Θ|Π))`, attained at `ρ* = Φ - E Φ`.
/// `perturbations` random null directions (seeded by `seed`) probe the
/// optimum.
pub fn var_variational(
    space: &DiscreteConfigSpace,
    phi: &BoundedObservable,
    perturbations: usize,
    seed: u64,
) -> Result<VarVariational> {
    check_len(space, &phi.phi)?;
    let half_var = half_variance(space, &phi.phi);
    let optimizer = NullDensity::project(space, phi.phi.clone())?;
    let sup_value = var_objective(space, phi, &optimizer);
    let mut rng = rng_for(seed, tag::PERTURB, 0);
    let mut best = f64::NEG_INFINITY;
    for i in 0..perturbations {
        let scale = 10f64.powi(-((i % 7) as i32));
        let d = random_vector(space.states(), scale * (1.0 + phi.bound), &mut rng);
        let cand: Vec<f64> = optimizer.rho.iter().zip(&d).map(|(r, x)| r + x).collect();
        best = best.max(var_objective(space, phi, &NullDensity::project(space, cand)?));
    }
    Ok(VarVariational { half_var, sup_value, optimizer, best_perturbed: best, perturbations })
}

/// `I(Θ|Π) = sup_Φ (⟨Φ, Θ⟩ - ½ Var Φ)`, attained at `Φ = ρ`.
pub fn info_variational(
    space: &DiscreteConfigSpace,
    rho: &NullDensity,
    perturbations: usize,
    seed: u64,
) -> Result<InfoVariational> {
    check_len(space, &rho.rho)?;
    let info = information(space, rho);
    let optimizer = BoundedObservable::new(space, rho.rho.clone())?;
    let sup_value = info_objective(space, &optimizer, rho);
    let mut rng = rng_for(seed, tag::PERTURB, 1);
    let mut best = f64::NEG_INFINITY;
    let scale0 = 1.0 + optimizer.bound;
    for i in 0..perturbations {
        let scale = 10f64.powi(-((i % 7) as i32));
        let d = random_vector(space.states(), scale * scale0, &mut rng);
        let cand: Vec<f64> = optimizer.phi.iter().zip(&d).map(|(f, x)| f + x).collect();
        best = best.max(info_objective(space, &BoundedObservable::new(space, cand)?, rho));
    }
    Ok(InfoVariational { info, sup_value, optimizer, best_perturbed: best, perturbations })
}

fn check_split(space: &DiscreteConfigSpace, cells_a: &[usize], cells_b: &[usize]) -> Result<()> {
    let mut seen = vec![false; space.n_cells];
    for &c in cells_a.iter().chain(cells_b) {
        if c >= space.n_cells || seen[c] {
            return Err(Error::param("split must partition the cells"));
        }
        seen[c] = true;
    }
    if seen.iter().any(|s| !s) || cells_a.is_empty() || cells_b.is_empty() {
        return Err(Error::param("split must partition the cells into two non-empty parts"));
    }
    Ok(())
}

/// `ρ_A(σ_A) = Σ_{σ_B} ρ_AB(σ_A, σ_B) π_B(σ_B)`, returned on the space of
/// the cells of `cells_a` (in the given order).
pub fn marginal_density(
    space: &DiscreteConfigSpace,
    cells_a: &[usize],
    cells_b: &[usize],
    rho: &NullDensity,
) -> Result<(DiscreteConfigSpace, NullDensity)> {
    check_split(space, cells_a, cells_b)?;
    check_len(space, &rho.rho)?;
    let sub = space.with_cells(cells_a.len())?;
    let base = space.max_occupancy + 1;
    let mut terms: Vec<Vec<f64>> = vec![Vec::new(); sub.states()];
    for s in 0..space.states() {
        let mut ia = 0;
        for (j, &c) in cells_a.iter().enumerate() {
            ia += space.occupancy(s, c) * base.pow(j as u32);
        }
        let pb: f64 = cells_b.iter().map(|&c| space.cell_law[space.occupancy(s, c)]).product();
        terms[ia].push(rho.rho[s] * pb);
    }
    let rho_a = terms.into_iter().map(compensated_sum).collect();
    Ok((sub, NullDensity { rho: rho_a }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Superadditivity {
    pub info_ab: f64,
    pub info_a: f64,
    pub info_b: f64,
    pub slack: f64,
}

/// `I_{A∪B} - I_A - I_B` with marginal densities on each part.
pub fn superadditivity_check(
    space: &DiscreteConfigSpace,
    cells_a: &[usize],
    cells_b: &[usize],
    rho: &NullDensity,
) -> Result<Superadditivity> {
    let (sa, ra) = marginal_density(space, cells_a, cells_b, rho)?;
    let (sb, rb) = marginal_density(space, cells_b, cells_a, rho)?;
    let info_ab = information(space, rho);
    let info_a = information(&sa, &ra);
    let info_b = information(&sb, &rb);
    Ok(Superadditivity { info_ab, info_a, info_b, slack: info_ab - info_a - info_b })
}

/// `ρ_m(σ_1, …, σ_m) = Σ_j ρ(σ_j)` on `m` independent copies of `base`.
pub fn block_product_density(
    base: &DiscreteConfigSpace,
    rho: &NullDensity,
    m: usize,
) -> Result<(DiscreteConfigSpace, NullDensity)> {
    check_len(base, &rho.rho)?;
    if m == 0 {
        return Err(Error::param("need at least one block"));
    }
    let cells = base.n_cells.checked_mul(m).ok_or_else(|| Error::param("too many blocks"))?;
    let space = base.with_cells(cells)?;
    let sb = base.states();
    let out = (0..space.states())
        .map(|s| {
            let mut rem = s;
            let mut acc = 0.0;
            for _ in 0..m {
                acc += rho.rho[rem % sb];
                rem /= sb;
            }
            acc
        })
        .collect();
    Ok((space, NullDensity { rho: out }))
}

/// A random null density with entries of order `scale`.
pub fn random_null_density<R: Rng + ?Sized>(space: &DiscreteConfigSpace, scale: f64, rng: &mut R) -> NullDensity {
    NullDensity::project(space, random_vector(space.states(), scale, rng)).expect("length matches")
}

pub fn random_observable<R: Rng + ?Sized>(space: &DiscreteConfigSpace, scale: f64, rng: &mut R) -> BoundedObservable {
    BoundedObservable::new(space, random_vector(space.states(), scale, rng)).expect("finite")
}

/// Outcome of one identity check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub identity: String,
    pub instance_hash: String,
    pub residual: f64,
    pub pass: bool,
}

/// SHA-256 of the space parameters and the instance vectors.
pub fn instance_hash(space: &DiscreteConfigSpace, vectors: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    for v in [space.n_cells as u64, space.max_occupancy as u64, space.cell_volume.to_bits(), space.intensity.to_bits()] {
        h.update(v.to_le_bytes());
    }
    for v in vectors {
        h.update((v.len() as u64).to_le_bytes());
        for x in *v {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn check(identity: &str, hash: String, residual: f64, pass: bool) -> Check {
    Check { identity: identity.to_string(), instance_hash: hash, residual, pass }
}

/// Runs every identity on `instances` random densities and observables of
/// `space`. Returns one [`Check`] per identity and instance.
pub fn verify_suite(space: &DiscreteConfigSpace, instances: usize, perturbations: usize, seed: u64) -> Result<Vec<Check>> {
    let tol = space.tolerance();
    let mut out = Vec::new();
    for i in 0..instances {
        let mut rng = rng_for(seed, tag::INSTANCE, i as u64);
        let rho = random_null_density(space, 1.0, &mut rng);
        let phi = random_observable(space, 1.0, &mut rng);
        let h = instance_hash(space, &[&rho.rho, &phi.phi]);
        let sub_seed = crate::streams::derive_seed(seed, i as u64);

        out.push(check("null-projection", h.clone(), space.expect(&rho.rho).abs(), space.expect(&rho.rho).abs() <= tol));

        let v = var_variational(space, &phi, perturbations, sub_seed)?;
        let r = (v.sup_value - v.half_var).abs();
        out.push(check("half-variance-duality", h.clone(), r, r <= tol));
        let over = (v.best_perturbed - v.sup_value).max(0.0);
        out.push(check("half-variance-optimality", h.clone(), over, over <= tol));

        let w = info_variational(space, &rho, perturbations, sub_seed)?;
        let r = (w.sup_value - w.info).abs();
        out.push(check("information-duality", h.clone(), r, r <= tol));
        let over = (w.best_perturbed - w.sup_value).max(0.0);
        out.push(check("information-optimality", h.clone(), over, over <= tol));

        if space.n_cells >= 2 {
            let half = space.n_cells / 2;
            let a: Vec<usize> = (0..half).collect();
            let b: Vec<usize> = (half..space.n_cells).collect();
            let s = superadditivity_check(space, &a, &b, &rho)?;
            out.push(check("superadditivity", h.clone(), (-s.slack).max(0.0), s.slack >= -tol));
            let jensen = (s.info_a - s.info_ab).max(0.0);
            out.push(check("marginal-information-monotone", h.clone(), jensen, jensen <= tol));
        }

        let rho2 = random_null_density(space, 1.0, &mut rng);
        let t: f64 = rng.random();
        let mix = NullDensity { rho: rho.rho.iter().zip(&rho2.rho).map(|(a, b)| t * a + (1.0 - t) * b).collect() };
        let gap = information(space, &mix) - (t * information(space, &rho) + (1.0 - t) * information(space, &rho2));
        out.push(check("information-convexity", h.clone(), gap.max(0.0), gap <= tol));

        for m in 2..=3 {
            if space.states().checked_pow(m as u32).is_some_and(|s| s <= MAX_STATES) {
                let (pspace, pr) = block_product_density(space, &rho, m)?;
                let r = (information(&pspace, &pr) - m as f64 * information(space, &rho)).abs();
                out.push(check(&format!("block-product-linearity-m{m}"), h.clone(), r, r <= pspace.tolerance().max(1e-10)));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> DiscreteConfigSpace {
        // One cell, K = 1, τv = 1: π = (½, ½).
        DiscreteConfigSpace::new(1, 1, 1.0, 1.0).unwrap()
    }

    #[test]
    fn reference_law_sums_to_one() {
        let s = DiscreteConfigSpace::new(4, 2, 0.7, 1.3).unwrap();
        assert_eq!(s.states(), 81);
        assert!((compensated_sum(s.pi().iter().copied()) - 1.0).abs() < 1e-14);
        assert!(s.pi().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn enumeration_bound() {
        assert!(DiscreteConfigSpace::new(15, 2, 1.0, 1.0).is_err());
        assert!(DiscreteConfigSpace::new(14, 2, 1.0, 1.0).is_ok());
    }

    #[test]
    fn two_state_hand_computations() {
        let s = two_state();
        assert_eq!(s.pi(), &[0.5, 0.5]);
        let rho = NullDensity::new(&s, vec![1.0, -1.0]).unwrap();
        assert_eq!(information(&s, &rho), 0.5);
        let phi = BoundedObservable::new(&s, vec![1.0, 0.0]).unwrap();
        let v = var_variational(&s, &phi, 50, 1).unwrap();
        assert_eq!(v.half_var, 0.125);
        assert_eq!(v.optimizer.rho, vec![0.5, -0.5]);
        assert!((v.sup_value - 0.125).abs() < 1e-15);
        let r = NullDensity::new(&s, vec![0.5, -0.5]).unwrap();
        let w = info_variational(&s, &r, 50, 1).unwrap();
        assert_eq!(w.info, 0.125);
        assert_eq!(w.optimizer.phi, vec![0.5, -0.5]);
        assert!((w.sup_value - 0.125).abs() < 1e-15);
    }

    #[test]
    fn zero_and_constant_cases() {
        let s = DiscreteConfigSpace::new(3, 2, 1.0, 1.0).unwrap();
        let z = NullDensity::zero(&s);
        assert_eq!(information(&s, &z), 0.0);
        let c = BoundedObservable::new(&s, vec![2.5; s.states()]).unwrap();
        let v = var_variational(&s, &c, 10, 0).unwrap();
        assert!(v.half_var.abs() < 1e-15);
        assert!(v.optimizer.rho.iter().all(|r| r.abs() < 1e-14));
        let sa = superadditivity_check(&s, &[0], &[1, 2], &z).unwrap();
        assert_eq!((sa.info_ab, sa.info_a, sa.info_b, sa.slack), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn non_null_density_rejected() {
        let s = two_state();
        assert!(NullDensity::new(&s, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn bad_split_rejected() {
        let s = DiscreteConfigSpace::new(3, 1, 1.0, 1.0).unwrap();
        let z = NullDensity::zero(&s);
        assert!(marginal_density(&s, &[0, 1], &[1, 2], &z).is_err());
        assert!(marginal_density(&s, &[0], &[1], &z).is_err());
    }

    #[test]
    fn block_product_of_one_is_identity() {
        let s = DiscreteConfigSpace::new(2, 1, 1.0, 0.5).unwrap();
        let mut rng = rng_for(3, 0, 0);
        let r = random_null_density(&s, 1.0, &mut rng);
        let (s1, r1) = block_product_density(&s, &r, 1).unwrap();
        assert_eq!(s1.states(), s.states());
        assert_eq!(r1.rho, r.rho);
    }

    #[test]
    fn suite_passes_on_small_space() {
        let s = DiscreteConfigSpace::new(4, 2, 1.0, 1.0).unwrap();
        let checks = verify_suite(&s, 3, 50, 11).unwrap();
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    }
}
