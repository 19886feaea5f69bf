//! Small numerical helpers shared across modules: compensated summation,
//! sample moments, delete-a-group jackknife and `log-sum-exp`.

use std::f64::consts::PI;

/// Volume of the unit ball in dimension `d` (1, 2 or 3).
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("unsupported dimension {d}"),
    }
}

/// Neumaier-compensated sum. Deterministic for a fixed input order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Unbiased sample variance (divisor `n - 1`).
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    compensated_sum(values.iter().map(|v| (v - m) * (v - m))) / (n - 1) as f64
}

/// Standard error of the mean.
pub fn std_error_of_mean(values: &[f64]) -> f64 {
    (sample_variance(values) / values.len() as f64).sqrt()
}

/// Unbiased sample covariance of two equally long samples.
pub fn sample_covariance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return f64::NAN;
    }
    let (ma, mb) = (mean(a), mean(b));
    compensated_sum(a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb))) / (n - 1) as f64
}

/// `log(mean(exp(values)))` without overflow.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s = compensated_sum(values.iter().map(|v| (v - max).exp()));
    max + (s / values.len() as f64).ln()
}

/// Result of a jackknife: full-sample estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jackknife {
    pub estimate: f64,
    pub std_error: f64,
}

/// Delete-a-group jackknife over `groups` contiguous blocks.
///
/// With `groups >= n` this is the ordinary delete-one jackknife. The
/// statistic is recomputed on each leave-one-block-out sample, so the cost is
/// `O(groups * n)`.
pub fn jackknife<F>(values: &[f64], groups: usize, stat: F) -> Jackknife
where
    F: Fn(&[f64]) -> f64,
{
    let n = values.len();
    let estimate = stat(values);
    let g = groups.min(n);
    if g < 2 {
        return Jackknife { estimate, std_error: f64::NAN };
    }
    let mut scratch = Vec::with_capacity(n);
    let mut leave_out = Vec::with_capacity(g);
    for b in 0..g {
        let lo = b * n / g;
        let hi = (b + 1) * n / g;
        scratch.clear();
        scratch.extend_from_slice(&values[..lo]);
        scratch.extend_from_slice(&values[hi..]);
        leave_out.push(stat(&scratch));
    }
    let m = mean(&leave_out);
    let ss = compensated_sum(leave_out.iter().map(|t| (t - m) * (t - m)));
    let gf = g as f64;
    Jackknife { estimate, std_error: ((gf - 1.0) / gf * ss).sqrt() }
}
