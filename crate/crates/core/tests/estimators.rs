use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stabfield::empirical::TestFunction;
use stabfield::estimators::{
    estimate_lln, estimate_scaled_cumulant, estimate_value_law, estimate_variance_direct, estimate_variance_pair,
    rate_quadratic_form, z_score, CumulantScanConfig, EstimateReport, FluctuationSource, GaussianSource,
    PairCorrelationConfig, RateBasis, SimulationSettings,
};
use stabfield::FunctionalSpec;

const NN: FunctionalSpec = FunctionalSpec::NnThreshold { threshold: 0.3 };

fn zero() -> TestFunction {
    TestFunction::Constant { value: 0.0 }
}

fn pair_config(reps: usize) -> PairCorrelationConfig {
    PairCorrelationConfig {
        r_max: 1.0,
        n_shells: 10,
        aux_lambda: 8.0,
        pair_term_factor: 1.0,
        diagonal_replicates: reps,
        shell_replicates: reps,
    }
}

/// `λ·Var` limit for the NN indicator in d = 1 at unit intensity, with the
/// cross term scaled by `c`.
fn nn_variance_closed_form(t: f64, c: f64) -> f64 {
    let q = (-2.0 * t).exp();
    let p = 1.0 - q;
    p + c * (2.0 * t * (1.0 - p * p) + 2.0 * q * (((-t).exp() - (-2.0 * t).exp()) - q * t))
}

#[test]
fn value_law_of_constant_is_a_point_mass() {
    let law = estimate_value_law(&FunctionalSpec::Constant { value: 2.5 }, &SimulationSettings::new(1.0, 2), 16.0, 200, 3, 1)
        .unwrap();
    let p = law.probability_of(2.5);
    assert_eq!((p.value, p.std_error), (1.0, 0.0));
    assert_eq!(law.mean.value, 2.5);
}

#[test]
fn value_law_matches_void_probability() {
    for (d, t) in [(1usize, 0.3f64), (2, 0.5)] {
        let law = estimate_value_law(&FunctionalSpec::NnThreshold { threshold: t }, &SimulationSettings::new(1.0, d), 64.0, 20_000, 2, 2)
            .unwrap();
        let target = 1.0 - (-stabfield::numeric::unit_ball_volume(d) * t.powi(d as i32)).exp();
        assert!(law.probability_of(1.0).within(target, 3.0), "d={d}");
    }
}

#[test]
fn packing_acceptance_falls_with_intensity() {
    let spec = FunctionalSpec::Packing { ball_volume: 1.0 };
    let ps: Vec<EstimateReport> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&tau| estimate_value_law(&spec, &SimulationSettings::new(tau, 1), 64.0, 20_000, 2, 3).unwrap().probability_of(1.0))
        .collect();
    for w in ps.windows(2) {
        assert!(w[0].value - w[1].value > 3.0 * z_denominator(&w[0], &w[1]), "{} !> {}", w[0].value, w[1].value);
    }
}

fn z_denominator(a: &EstimateReport, b: &EstimateReport) -> f64 {
    (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

#[test]
fn lln_counts_and_constants() {
    let sim = SimulationSettings::new(2.0, 2);
    for r in estimate_lln(&NN, &TestFunction::one(), &sim, &[100.0, 400.0], 400, 4).unwrap() {
        assert!(r.within(2.0, 3.0));
    }
    let f = TestFunction::Cosine { frequency: 1.0, amplitude: 1.0, phase: 0.0 };
    let c = 0.6;
    for r in estimate_lln(&FunctionalSpec::Constant { value: c }, &f, &sim, &[100.0, 400.0], 400, 5).unwrap() {
        assert!(r.within(2.0 * c.cos(), 3.0));
    }
}

#[test]
fn lln_for_nn_matches_void_probability() {
    let sim = SimulationSettings::new(1.0, 1);
    let f = TestFunction::LogisticBump { center: 0.5, width: 0.2, height: 1.0 };
    let reports = estimate_lln(&NN, &f, &sim, &[256.0, 1024.0], 1000, 6).unwrap();
    let p = 1.0 - (-0.6f64).exp();
    let target = f.eval(1.0) * p + f.eval(0.0) * (1.0 - p);
    assert!(reports.last().unwrap().within(target, 3.0));
}

#[test]
fn direct_variance_edge_cases() {
    let sim = SimulationSettings::new(1.5, 1);
    let c = FunctionalSpec::Constant { value: 0.8 };
    let f = TestFunction::identity_clipped(1.0);
    let r = estimate_variance_direct(&c, &f, &sim, &[512.0], 2000, 7).unwrap().remove(0);
    assert!(r.within(1.5 * 0.64, 3.0), "{r:?}");
    let z = estimate_variance_direct(&NN, &zero(), &sim, &[64.0], 200, 8).unwrap().remove(0);
    assert_eq!((z.value, z.std_error), (0.0, 0.0));
}

#[test]
fn direct_variance_stabilizes_in_volume() {
    let sim = SimulationSettings::new(1.0, 1);
    let reports =
        estimate_variance_direct(&NN, &TestFunction::identity_clipped(1.0), &sim, &[256.0, 1024.0, 2048.0], 4000, 9)
            .unwrap();
    let (a, b) = (&reports[1], &reports[2]);
    assert!(z_score(a, b) <= 3.0);
    assert!(b.within(nn_variance_closed_form(0.3, 1.0), 3.0), "{b:?}");
}

#[test]
fn pair_variance_of_constant_has_no_cross_term() {
    let sim = SimulationSettings::new(1.5, 2);
    let c = FunctionalSpec::Constant { value: 0.8 };
    let f = TestFunction::identity_clipped(1.0);
    let r = estimate_variance_pair(&c, &f, &sim, &pair_config(500), 10).unwrap();
    let want = 1.5 * 0.64;
    assert!((r.factor_half.value - want).abs() < 1e-9);
    assert!((r.factor_one.value - want).abs() < 1e-9);
    assert!(r.second_term.value.abs() < 1e-9);
    let z = estimate_variance_pair(&NN, &zero(), &sim, &pair_config(200), 11).unwrap();
    assert_eq!(z.selected.value, 0.0);
}

#[test]
fn pair_variance_of_nn_matches_closed_form() {
    let sim = SimulationSettings::new(1.0, 1);
    let r = estimate_variance_pair(&NN, &TestFunction::identity_clipped(1.0), &sim, &pair_config(8000), 12).unwrap();
    assert!(r.factor_one.within(nn_variance_closed_form(0.3, 1.0), 3.0), "{:?}", r.factor_one);
    assert!(r.factor_half.within(nn_variance_closed_form(0.3, 0.5), 3.0), "{:?}", r.factor_half);
    let diag = 1.0 - (-0.6f64).exp();
    assert!(r.diagonal_term.within(diag, 3.0));
}

struct Silent;

impl FluctuationSource for Silent {
    fn sample(&self, _: f64, _: u64, _: u64) -> stabfield::Result<f64> {
        Ok(0.0)
    }

    fn label(&self) -> String {
        "zero".into()
    }
}

#[test]
fn cumulant_of_zero_statistic_vanishes() {
    let ccfg = CumulantScanConfig { beta: 0.3, lambda_grid: vec![10.0, 100.0], replicates: 400 };
    for p in estimate_scaled_cumulant(&Silent, &ccfg, 1).unwrap() {
        assert_eq!(p.cumulant.value, 0.0);
        assert_eq!(p.half_variance.value, 0.0);
    }
}

#[test]
fn cumulant_of_gaussian_is_half_variance() {
    let ccfg = CumulantScanConfig { beta: 0.25, lambda_grid: vec![100.0, 1000.0], replicates: 20_000 };
    for p in estimate_scaled_cumulant(&GaussianSource { variance: 0.2, seed: 5 }, &ccfg, 5).unwrap() {
        assert!(p.cumulant.within(0.1, 3.0), "{:?}", p.cumulant);
        assert!(p.half_variance.within(0.1, 3.0));
        assert!(p.cumulant.value >= -3.0 * p.cumulant.std_error);
    }
    let bad = CumulantScanConfig { beta: 0.5, lambda_grid: vec![10.0], replicates: 400 };
    assert!(estimate_scaled_cumulant(&Silent, &bad, 1).is_err());
}

fn random_basis(k: usize, rng: &mut ChaCha8Rng) -> RateBasis {
    let a: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let gram = (0..k)
        .map(|i| (0..k).map(|j| (0..k).map(|l| a[i][l] * a[j][l]).sum::<f64>() + if i == j { 0.05 } else { 0.0 }).collect())
        .collect();
    RateBasis::with_gram(vec![TestFunction::one(); k], gram)
}

/// Coordinate ascent on the concave objective; exact per-coordinate maxima.
fn coordinate_ascent(m: &[Vec<f64>], g: &[f64]) -> f64 {
    let k = g.len();
    let mut c = vec![0.0; k];
    for _ in 0..20_000 {
        for i in 0..k {
            let off: f64 = (0..k).filter(|&j| j != i).map(|j| m[i][j] * c[j]).sum();
            c[i] = (g[i] - off) / m[i][i];
        }
    }
    let quad: f64 = (0..k).map(|i| (0..k).map(|j| c[i] * m[i][j] * c[j]).sum::<f64>()).sum();
    c.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() - 0.5 * quad
}

#[test]
fn rate_matches_coordinate_ascent() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let basis = random_basis(3, &mut rng);
        let g: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let j = rate_quadratic_form(&basis, &g, None).unwrap();
        let want = coordinate_ascent(&basis.gram, &g);
        assert!((j - want).abs() <= 1e-6 * want.abs().max(1.0), "{j} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn nested_rates_are_monotone(seed in 0u64..100_000, k in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = random_basis(k, &mut rng);
        let g: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut last = 0.0f64;
        for m in 1..=k {
            let j = rate_quadratic_form(&basis.truncated(m), &g[..m], None).unwrap();
            prop_assert!(j >= last - 1e-10 * last.abs().max(1.0));
            last = j;
        }
    }
}
