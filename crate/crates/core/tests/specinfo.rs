use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stabfield::specinfo::{
    block_product_density, info_variational, information, marginal_density, random_null_density, random_observable,
    superadditivity_check, var_objective, var_variational, BoundedObservable, DiscreteConfigSpace, NullDensity,
};

fn two_state() -> DiscreteConfigSpace {
    DiscreteConfigSpace::new(1, 1, 1.0, 1.0).unwrap()
}

/// Reference law rebuilt from factorials, independent of the library's recursion.
fn pi_oracle(n: usize, k: usize, mu: f64) -> Vec<f64> {
    let fact = |j: usize| (1..=j).map(|i| i as f64).product::<f64>();
    let w: Vec<f64> = (0..=k).map(|j| mu.powi(j as i32) / fact(j)).collect();
    let z: f64 = w.iter().sum();
    (0..(k + 1).pow(n as u32))
        .map(|s| {
            let mut p = 1.0;
            let mut rem = s;
            for _ in 0..n {
                p *= w[rem % (k + 1)] / z;
                rem /= k + 1;
            }
            p
        })
        .collect()
}

/// Sum sorted by magnitude in extended (two-term) precision.
fn careful_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for x in v {
        let s = hi + x;
        let bp = s - hi;
        lo += (hi - (s - bp)) + (x - bp);
        hi = s;
    }
    hi + lo
}

#[test]
fn reference_law_is_normalized_and_positive() {
    let space = DiscreteConfigSpace::new(6, 2, 0.5, 1.3).unwrap();
    assert!((careful_sum(space.pi().to_vec()) - 1.0).abs() < 1e-14);
    assert!(space.pi().iter().all(|&p| p > 0.0));
    assert!(DiscreteConfigSpace::new(15, 2, 1.0, 1.0).is_err());
}

#[test]
fn information_matches_enumeration_oracle() {
    let (n, k, v, tau) = (4, 2, 0.7, 1.2);
    let space = DiscreteConfigSpace::new(n, k, v, tau).unwrap();
    let pi = pi_oracle(n, k, v * tau);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let rho = random_null_density(&space, 1.0, &mut rng);
        let want = 0.5 * careful_sum(rho.rho.iter().zip(&pi).map(|(r, p)| r * r * p).collect());
        assert!((information(&space, &rho) - want).abs() < 1e-14);
    }
    assert_eq!(information(&space, &NullDensity::zero(&space)), 0.0);
    let rho = NullDensity::new(&two_state(), vec![1.0, -1.0]).unwrap();
    assert!((information(&two_state(), &rho) - 0.5).abs() < 1e-15);
}

#[test]
fn two_state_variational_examples() {
    let s = two_state();
    let r = var_variational(&s, &BoundedObservable::new(&s, vec![1.0, 0.0]).unwrap(), 100, 1).unwrap();
    assert!((r.half_var - 0.125).abs() < 1e-15);
    assert!((r.sup_value - 0.125).abs() < 1e-15);
    assert!((r.optimizer.rho[0] - 0.5).abs() < 1e-15 && (r.optimizer.rho[1] + 0.5).abs() < 1e-15);
    let i = info_variational(&s, &NullDensity::new(&s, vec![0.5, -0.5]).unwrap(), 100, 1).unwrap();
    assert!((i.info - 0.125).abs() < 1e-15 && (i.sup_value - 0.125).abs() < 1e-15);
    let c = var_variational(&s, &BoundedObservable::new(&s, vec![3.0, 3.0]).unwrap(), 10, 1).unwrap();
    assert_eq!(c.half_var, 0.0);
    assert!(c.optimizer.rho.iter().all(|&r| r == 0.0));
}

#[test]
fn random_net_never_beats_variance_supremum() {
    let space = DiscreteConfigSpace::new(5, 1, 1.0, 0.8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let phi = random_observable(&space, 1.0, &mut rng);
    let r = var_variational(&space, &phi, 0, 0).unwrap();
    assert!((r.sup_value - r.half_var).abs() < 1e-12);
    for i in 0..10_000 {
        let scale = [2.0, 0.5, 0.05][i % 3];
        let theta = random_null_density(&space, scale, &mut rng);
        assert!(var_objective(&space, &phi, &theta) <= r.sup_value + 1e-12);
    }
}

#[test]
fn random_net_never_beats_information() {
    let space = DiscreteConfigSpace::new(4, 1, 1.0, 1.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rho = random_null_density(&space, 1.0, &mut rng);
    let r = info_variational(&space, &rho, 2000, 4).unwrap();
    assert!((r.sup_value - r.info).abs() < 1e-12);
    assert!(r.best_perturbed <= r.info + 1e-12);
}

#[test]
fn marginal_matches_double_enumeration() {
    let (n, k) = (4, 2);
    let space = DiscreteConfigSpace::new(n, k, 1.0, 0.9).unwrap();
    let law = space.cell_law.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rho = random_null_density(&space, 1.0, &mut rng);
    let (sub, ra) = marginal_density(&space, &[0, 2], &[1, 3], &rho).unwrap();
    assert_eq!(sub.states(), 9);
    for a0 in 0..=k {
        for a2 in 0..=k {
            let mut want = 0.0;
            for b1 in 0..=k {
                for b3 in 0..=k {
                    let s = a0 + 3 * b1 + 9 * a2 + 27 * b3;
                    want += rho.rho[s] * law[b1] * law[b3];
                }
            }
            assert!((ra.rho[a0 + 3 * a2] - want).abs() < 1e-14);
        }
    }
}

#[test]
fn marginal_of_a_only_density_is_itself() {
    let space = DiscreteConfigSpace::new(3, 2, 1.0, 1.0).unwrap();
    let sa = space.with_cells(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ra = random_null_density(&sa, 1.0, &mut rng);
    let lifted = (0..space.states()).map(|s| ra.rho[s % 9]).collect();
    let rho = NullDensity::new(&space, lifted).unwrap();
    let (_, m) = marginal_density(&space, &[0, 1], &[2], &rho).unwrap();
    for (x, y) in m.rho.iter().zip(&ra.rho) {
        assert!((x - y).abs() < 1e-15);
    }
    let (_, z) = marginal_density(&space, &[0, 1], &[2], &NullDensity::zero(&space)).unwrap();
    assert!(z.rho.iter().all(|&v| v == 0.0));
}

#[test]
fn superadditivity_slack_is_positive_with_cross_terms() {
    let space = DiscreteConfigSpace::new(4, 1, 1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let rho = random_null_density(&space, 1.0, &mut rng);
        let s = superadditivity_check(&space, &[0, 1], &[2, 3], &rho).unwrap();
        assert!(s.slack > 1e-6, "{s:?}");
    }
    let z = superadditivity_check(&space, &[0], &[1, 2, 3], &NullDensity::zero(&space)).unwrap();
    assert_eq!((z.info_ab, z.info_a, z.info_b, z.slack), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn block_products_grow_linearly() {
    let base = DiscreteConfigSpace::new(2, 1, 1.0, 0.6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rho = random_null_density(&base, 1.0, &mut rng);
    let (s3, r3) = block_product_density(&base, &rho, 3).unwrap();
    assert_eq!(s3.states(), 64);
    assert!((information(&s3, &r3) - 3.0 * information(&base, &rho)).abs() < 1e-12);
    let (s1, r1) = block_product_density(&base, &rho, 1).unwrap();
    assert_eq!((s1.states(), &r1.rho), (base.states(), &rho.rho));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn information_is_convex(seed in any::<u64>(), t in 0.0f64..=1.0) {
        let space = DiscreteConfigSpace::new(3, 2, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_null_density(&space, 1.0, &mut rng);
        let b = random_null_density(&space, 1.0, &mut rng);
        let mix = NullDensity::project(&space, a.rho.iter().zip(&b.rho).map(|(x, y)| t * x + (1.0 - t) * y).collect()).unwrap();
        let lhs = information(&space, &mix);
        prop_assert!(lhs <= t * information(&space, &a) + (1.0 - t) * information(&space, &b) + 1e-12);
    }

    #[test]
    fn conditioning_never_increases_information(seed in any::<u64>(), split in 1usize..4) {
        let space = DiscreteConfigSpace::new(4, 1, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_null_density(&space, rng.random_range(0.1..3.0), &mut rng);
        let a: Vec<usize> = (0..split).collect();
        let b: Vec<usize> = (split..4).collect();
        let (sa, ra) = marginal_density(&space, &a, &b, &rho).unwrap();
        prop_assert!(information(&sa, &ra) <= information(&space, &rho) + 1e-12);
    }

    #[test]
    fn projection_yields_null_densities(raw in prop::collection::vec(-5.0f64..5.0, 27)) {
        let space = DiscreteConfigSpace::new(3, 2, 0.8, 1.1).unwrap();
        let rho = NullDensity::project(&space, raw).unwrap();
        prop_assert!(space.expect(&rho.rho).abs() < 1e-12);
    }
}
