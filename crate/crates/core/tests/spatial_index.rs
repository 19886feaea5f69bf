use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stabfield::geometry::Position;
use stabfield::spatial_index::Neighbor;
use stabfield::{NeighborIndex, TorusGeometry};

fn positions(d: usize, l: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Position> {
    (0..n)
        .map(|_| {
            let mut x = [0.0; 3];
            for c in x.iter_mut().take(d) {
                *c = rng.random_range(-l / 2.0..l / 2.0);
            }
            x
        })
        .collect()
}

fn brute(g: &TorusGeometry, pts: &[Position], x: &Position) -> Vec<Neighbor> {
    let mut v: Vec<Neighbor> =
        pts.iter().enumerate().map(|(id, p)| Neighbor { id, distance: g.distance(x, p) }).collect();
    v.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)));
    v
}

#[test]
fn thousand_queries_match_brute_force_in_every_dimension() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in 1..=3 {
        let l = 10.0;
        let g = TorusGeometry::new(d, l).unwrap();
        let pts = positions(d, l, 1000, &mut rng);
        let index = NeighborIndex::from_positions(g, pts.clone(), 0.7).unwrap();
        for _ in 0..1000 {
            let x = positions(d, l, 1, &mut rng)[0];
            let r = rng.random_range(0.0..3.0);
            let all = brute(&g, &pts, &x);
            let want: Vec<Neighbor> = all.iter().copied().filter(|n| n.distance < r).collect();
            assert_eq!(index.within(&x, r), want);
            assert_eq!(index.k_nearest(&x, 4, None).unwrap(), all[..4].to_vec());
        }
    }
}

#[test]
fn oversized_cells_degenerate_to_one_bin() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = TorusGeometry::new(2, 3.0).unwrap();
    let pts = positions(2, 3.0, 50, &mut rng);
    let index = NeighborIndex::from_positions(g, pts.clone(), 10.0).unwrap();
    for _ in 0..100 {
        let x = positions(2, 3.0, 1, &mut rng)[0];
        let all = brute(&g, &pts, &x);
        assert_eq!(index.within(&x, 1.2), all.iter().copied().filter(|n| n.distance < 1.2).collect::<Vec<_>>());
        assert_eq!(index.k_nearest(&x, 7, None).unwrap(), all[..7].to_vec());
    }
}

#[test]
fn exclusion_and_insufficient_points() {
    let g = TorusGeometry::new(1, 10.0).unwrap();
    let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]];
    let index = NeighborIndex::from_positions(g, pts, 1.0).unwrap();
    let nn = index.k_nearest(&[0.0; 3], 2, Some(0)).unwrap();
    assert_eq!(nn.iter().map(|n| n.id).collect::<Vec<_>>(), vec![1, 2]);
    assert!(index.k_nearest(&[0.0; 3], 3, Some(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn results_do_not_depend_on_cell_size(seed in 0u64..10_000, d in 1usize..=3, cs in 0.2f64..6.0, k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = TorusGeometry::new(d, 5.0).unwrap();
        let pts = positions(d, 5.0, 40, &mut rng);
        let a = NeighborIndex::from_positions(g, pts.clone(), cs).unwrap();
        let b = NeighborIndex::from_positions(g, pts, 5.0).unwrap();
        let x = positions(d, 5.0, 1, &mut rng)[0];
        prop_assert_eq!(a.within(&x, 1.3), b.within(&x, 1.3));
        prop_assert_eq!(a.k_nearest(&x, k, None).unwrap(), b.k_nearest(&x, k, None).unwrap());
    }
}
