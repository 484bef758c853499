mod common;

use std::collections::BTreeSet;

use context_cd::graph::{
    acyclify, d_separated, is_acyclic, labeled_union, sigma_separated, strongly_connected_components, union_of_graphs,
    DirectedMixedGraph, SeparationQuery,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_force_separated, for_all_queries, random_graph};

#[test]
fn d_separation_matches_path_enumeration_on_random_dags() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0usize;
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let p = rng.random_range(0.15..0.6);
        let g = random_graph(&mut rng, n, p, true);
        for_all_queries(&g, |x, y, z, d, _| {
            let q = SeparationQuery::new(x, y, z.iter().copied());
            assert_eq!(d_separated(&g, &q).unwrap(), d, "{x} {y} {z:?}");
            let q_rev = SeparationQuery::new(y, x, z.iter().copied());
            assert_eq!(d_separated(&g, &q_rev).unwrap(), d);
            checked += 1;
        });
    }
    assert!(checked > 1000);
}

#[test]
fn sigma_separation_matches_path_enumeration_on_cyclic_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let p = rng.random_range(0.1..0.45);
        let g = random_graph(&mut rng, n, p, false);
        for_all_queries(&g, |x, y, z, _, s| {
            let q = SeparationQuery::new(x, y, z.iter().copied());
            assert_eq!(sigma_separated(&g, &q).unwrap(), s, "{x} {y} {z:?}");
        });
    }
}

#[test]
fn sigma_agrees_with_d_on_acyclification() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut outside = 0usize;
    let mut inside_mismatch = 0usize;
    let mut inside = 0usize;
    for _ in 0..150 {
        let n = rng.random_range(3..=6);
        let p = rng.random_range(0.1..0.4);
        let g = random_graph(&mut rng, n, p, false);
        let acy = acyclify(&g);
        let cyclic_nodes: BTreeSet<usize> = strongly_connected_components(&g)
            .into_iter()
            .filter(|c| c.len() > 1)
            .flatten()
            .collect();
        for_all_queries(&g, |x, y, z, _, s| {
            let q = SeparationQuery::new(x, y, z.iter().copied());
            let d_acy = brute_force_separated(&acy, x, y, z, false);
            assert_eq!(d_separated(&acy, &q).unwrap(), d_acy);
            if z.is_disjoint(&cyclic_nodes) {
                outside += 1;
                assert_eq!(s, d_acy, "{x} {y} {z:?}");
            } else {
                inside += 1;
                if s != d_acy {
                    inside_mismatch += 1;
                }
            }
        });
    }
    assert!(outside > 0);
    println!("acyclification: {inside_mismatch}/{inside} discrepancies for conditioning sets touching cycles");
}

/// The large-cycle fixture: an 8-ring W0..W7 with X = W2, Y = W6, plus
/// Z -> {W3, W4} and Z' -> {W0, W7}. Context 0 lacks W0 -> W1, context 1
/// lacks W4 -> W5.
fn ring(skip: Option<(usize, usize)>) -> DirectedMixedGraph {
    let names = ["W0", "W1", "X", "W3", "W4", "W5", "Y", "W7", "Z", "Z'"];
    let mut g = DirectedMixedGraph::from_names(&names);
    for i in 0..8 {
        let e = (i, (i + 1) % 8);
        if Some(e) != skip {
            g.add_directed(e.0, e.1).unwrap();
        }
    }
    for (a, b) in [(8, 3), (8, 4), (9, 0), (9, 7)] {
        g.add_directed(a, b).unwrap();
    }
    g
}

#[test]
fn large_cycle_fixture() {
    let ctx0 = ring(Some((0, 1)));
    let ctx1 = ring(Some((4, 5)));
    let union = ring(None);
    assert!(is_acyclic(&ctx0) && is_acyclic(&ctx1) && !is_acyclic(&union));
    let (x, y) = (2, 6);
    // parents of Y separate in context 0, parents of X in context 1
    assert!(d_separated(&ctx0, &SeparationQuery::new(x, y, [5])).unwrap());
    assert!(d_separated(&ctx1, &SeparationQuery::new(x, y, [1])).unwrap());
    // conditioning on Adj(X) = {W1, W3} opens X -> W3 <- Z -> W4 -> W5 -> Y
    assert!(!d_separated(&ctx0, &SeparationQuery::new(x, y, [1, 3])).unwrap());
    assert!(!sigma_separated(&union, &SeparationQuery::new(x, y, [1, 3])).unwrap());
    // neither parent set works on the union
    assert!(!sigma_separated(&union, &SeparationQuery::new(x, y, [5])).unwrap());
    assert!(!sigma_separated(&union, &SeparationQuery::new(x, y, [1])).unwrap());
}

fn arb_graph() -> impl Strategy<Value = DirectedMixedGraph> {
    (any::<u64>(), 2usize..=6).prop_map(|(seed, n)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_graph(&mut rng, n, 0.3, false)
    })
}

fn same_n(n: usize) -> impl Strategy<Value = Vec<DirectedMixedGraph>> {
    prop::collection::vec(any::<u64>(), 3).prop_map(move |seeds| {
        seeds
            .into_iter()
            .map(|s| random_graph(&mut ChaCha8Rng::seed_from_u64(s), n, 0.3, false))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn union_is_commutative_associative_idempotent(gs in same_n(5)) {
        let (a, b, c) = (&gs[0], &gs[1], &gs[2]);
        let ab = union_of_graphs(&[a.clone(), b.clone()]).unwrap();
        let ba = union_of_graphs(&[b.clone(), a.clone()]).unwrap();
        prop_assert_eq!(&ab, &ba);
        let ab_c = union_of_graphs(&[ab.clone(), c.clone()]).unwrap();
        let bc = union_of_graphs(&[b.clone(), c.clone()]).unwrap();
        let a_bc = union_of_graphs(&[a.clone(), bc]).unwrap();
        prop_assert_eq!(&ab_c, &a_bc);
        prop_assert_eq!(union_of_graphs(&[a.clone(), a.clone()]).unwrap(), a.clone());
    }

    #[test]
    fn labeled_union_drops_to_union(gs in same_n(5)) {
        let map = gs.iter().cloned().enumerate().map(|(i, g)| (i as u32, g)).collect();
        let lu = labeled_union(&map).unwrap().without_labels();
        prop_assert_eq!(union_of_graphs(&[lu]).unwrap(), union_of_graphs(&gs).unwrap());
    }

    #[test]
    fn sigma_separation_is_symmetric(g in arb_graph(), x in 0usize..6, y in 0usize..6, mask in 0u32..64) {
        let n = g.n_nodes();
        let (x, y) = (x % n, y % n);
        prop_assume!(x != y);
        let z: BTreeSet<usize> = (0..n).filter(|&v| v != x && v != y && mask >> v & 1 == 1).collect();
        let a = sigma_separated(&g, &SeparationQuery::new(x, y, z.iter().copied())).unwrap();
        let b = sigma_separated(&g, &SeparationQuery::new(y, x, z.iter().copied())).unwrap();
        prop_assert_eq!(a, b);
    }
}
