mod common;

use std::collections::BTreeSet;

use common::*;
use gridltl::distgraph::{Distance, DistanceGraph};
use proptest::prelude::*;
use rand::Rng;

fn random_graph(seed: u64) -> DistanceGraph {
    let mut r = rng(seed);
    let n = r.gen_range(1..10);
    let mut edges = BTreeSet::new();
    for a in 0..n {
        for b in 0..n {
            if r.gen_bool(0.2) {
                edges.insert((a, b));
            }
        }
    }
    let acc = edges.iter().filter(|_| r.gen_bool(0.2)).copied().collect();
    DistanceGraph::from_parts((0..n).collect(), edges, acc)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn distances_match_reverse_bfs(seed in any::<u64>()) {
        let g = random_graph(seed);
        let want = reverse_bfs(&g.nodes, &g.edges, &g.v_f);
        prop_assert_eq!(&g.dist_to_vf, &want);
        for &q in &g.nodes {
            if let Distance::Finite(d) = g.distance_to_vf(q) {
                if d > 0 {
                    prop_assert!(g.successors(q).any(|n| g.distance_to_vf(n) == Distance::Finite(d - 1)));
                }
            }
        }
    }

    #[test]
    fn removing_an_edge_never_shortens_distances(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let g = random_graph(seed);
        prop_assume!(!g.edges.is_empty());
        let (a, b) = **pick.get(&g.edges.iter().collect::<Vec<_>>());
        let g2 = g.remove_edge(a, b).unwrap();
        for &q in &g.nodes {
            prop_assert!(g2.distance_to_vf(q) >= g.distance_to_vf(q));
        }
    }
}
