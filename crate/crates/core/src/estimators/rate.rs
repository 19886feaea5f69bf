use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::{check_replicates, sample_pairings, SimulationSettings, JACKKNIFE_GROUPS};
use crate::empirical::TestFunction;
use crate::error::{Error, Result};
use crate::functionals::FunctionalSpec;
use crate::numeric::sample_covariance;

/// A finite basis of test functions with its estimated gram matrix
/// `M_ij = τ ⟨f_i ⊗ f_j, μ⟩`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBasis {
    pub functions: Vec<TestFunction>,
    pub gram: Vec<Vec<f64>>,
    pub gram_std_error: Vec<Vec<f64>>,
}

impl RateBasis {
    /// A basis with a known gram matrix.
    pub fn with_gram(functions: Vec<TestFunction>, gram: Vec<Vec<f64>>) -> Self {
        let k = gram.len();
        Self { functions, gram, gram_std_error: vec![vec![0.0; k]; k] }
    }

    pub fn size(&self) -> usize {
        self.gram.len()
    }

    /// The leading `k × k` block.
    pub fn truncated(&self, k: usize) -> Self {
        let cut = |m: &Vec<Vec<f64>>| m.iter().take(k).map(|r| r[..k].to_vec()).collect();
        Self {
            functions: self.functions.iter().take(k).cloned().collect(),
            gram: cut(&self.gram),
            gram_std_error: cut(&self.gram_std_error),
        }
    }
}

/// Default eigenvalue floor `1e-10 · trace(M) / k`.
pub fn pseudo_inverse_floor(gram: &[Vec<f64>]) -> f64 {
    let k = gram.len().max(1);
    let trace: f64 = gram.iter().enumerate().map(|(i, r)| r[i]).sum();
    1e-10 * trace.abs() / k as f64
}

/// `J_k(γ) = ½ gᵀ M⁺ g`, the supremum of `⟨f, γ⟩ - ½ cᵀMc` over the span of
/// the basis. Eigenvalues at or below `floor` (default
/// [`pseudo_inverse_floor`]) are dropped from the pseudo-inverse.
pub fn rate_quadratic_form(basis: &RateBasis, g: &[f64], floor: Option<f64>) -> Result<f64> {
    let k = basis.size();
    if g.len() != k || basis.gram.iter().any(|r| r.len() != k) {
        return Err(Error::param(format!("gram must be {k}×{k} and g of length {k}")));
    }
    if basis.gram.iter().flatten().chain(g).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("gram matrix or coefficients not finite".into()));
    }
    let scale = basis.gram.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..k {
        for j in 0..i {
            if (basis.gram[i][j] - basis.gram[j][i]).abs() > 1e-12 * scale {
                return Err(Error::Numeric(format!("gram matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    if k == 0 {
        return Ok(0.0);
    }
    let m = DMatrix::from_fn(k, k, |i, j| 0.5 * (basis.gram[i][j] + basis.gram[j][i]));
    let eps = floor.unwrap_or_else(|| pseudo_inverse_floor(&basis.gram));
    if !(eps >= 0.0) {
        return Err(Error::param("eigenvalue floor must be >= 0"));
    }
    let eig = SymmetricEigen::new(m);
    let gv = DVector::from_column_slice(g);
    let mut j = 0.0;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > eps {
            let proj = eig.eigenvectors.column(i).dot(&gv);
            j += proj * proj / lam;
        }
    }
    Ok(0.5 * j)
}

/// Estimates the gram matrix by `λ Cov(⟨f_i, Z_λ⟩, ⟨f_j, Z_λ⟩)` at one
/// volume, with jackknife standard errors.
pub fn estimate_gram(
    spec: &FunctionalSpec,
    functions: &[TestFunction],
    sim: &SimulationSettings,
    lambda: f64,
    replicates: usize,
    seed: u64,
) -> Result<RateBasis> {
    check_replicates(replicates, 100)?;
    if functions.is_empty() {
        return Err(Error::param("basis must contain at least one function"));
    }
    let batch = sample_pairings(spec, functions, sim, lambda, replicates, seed, 0)?;
    let k = functions.len();
    let mut gram = vec![vec![0.0; k]; k];
    let mut se = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let (a, b) = (&batch.values[i], &batch.values[j]);
            let jk = pair_jackknife(a, b, |x, y| lambda * sample_covariance(x, y));
            gram[i][j] = jk.estimate;
            gram[j][i] = jk.estimate;
            se[i][j] = jk.std_error;
            se[j][i] = jk.std_error;
        }
    }
    Ok(RateBasis { functions: functions.to_vec(), gram, gram_std_error: se })
}

/// Delete-a-group jackknife for a statistic of two paired samples.
fn pair_jackknife<F: Fn(&[f64], &[f64]) -> f64>(a: &[f64], b: &[f64], stat: F) -> crate::numeric::Jackknife {
    let n = a.len();
    let estimate = stat(a, b);
    let g = JACKKNIFE_GROUPS.min(n);
    let mut leave_out = Vec::with_capacity(g);
    for k in 0..g {
        let (lo, hi) = (k * n / g, (k + 1) * n / g);
        let ra: Vec<f64> = a[..lo].iter().chain(&a[hi..]).copied().collect();
        let rb: Vec<f64> = b[..lo].iter().chain(&b[hi..]).copied().collect();
        leave_out.push(stat(&ra, &rb));
    }
    let m = crate::numeric::mean(&leave_out);
    let ss: f64 = leave_out.iter().map(|t| (t - m) * (t - m)).sum();
    let gf = g as f64;
    crate::numeric::Jackknife { estimate, std_error: ((gf - 1.0) / gf * ss).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_measure_has_zero_rate() {
        let b = RateBasis::with_gram(vec![], vec![vec![2.0, 0.5], vec![0.5, 1.0]]);
        assert_eq!(rate_quadratic_form(&b, &[0.0, 0.0], None).unwrap(), 0.0);
    }

    #[test]
    fn scalar_closed_form() {
        let b = RateBasis::with_gram(vec![], vec![vec![0.8]]);
        let j = rate_quadratic_form(&b, &[0.3], None).unwrap();
        assert!((j - 0.09 / 1.6).abs() < 1e-15);
    }

    #[test]
    fn rejects_asymmetric_or_nonfinite() {
        let b = RateBasis::with_gram(vec![], vec![vec![1.0, 0.2], vec![0.3, 1.0]]);
        assert!(rate_quadratic_form(&b, &[1.0, 1.0], None).is_err());
        let c = RateBasis::with_gram(vec![], vec![vec![f64::NAN]]);
        assert!(rate_quadratic_form(&c, &[1.0], None).is_err());
    }

    #[test]
    fn singular_gram_uses_pseudo_inverse() {
        let b = RateBasis::with_gram(vec![], vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        // g in the range of M: M⁺ g = g/4 along (1,1)/√2 with eigenvalue 2.
        let j = rate_quadratic_form(&b, &[1.0, 1.0], None).unwrap();
        assert!((j - 0.5).abs() < 1e-12);
    }
}
