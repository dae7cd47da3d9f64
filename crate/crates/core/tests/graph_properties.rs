mod common;

use consensus_core::graph::{is_nonsingular_m_matrix, min_symmetric_eigenvalue, DirectedGraph};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn strongly_connected() -> impl Strategy<Value = DirectedGraph> {
    (1usize..=25, any::<u64>())
        .prop_map(|(n, seed)| common::random_strongly_connected(&mut ChaCha8Rng::seed_from_u64(seed), n))
}

fn rooted() -> impl Strategy<Value = DirectedGraph> {
    (2usize..=25, any::<u64>())
        .prop_map(|(n, seed)| common::random_spanning_tree_graph(&mut ChaCha8Rng::seed_from_u64(seed), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn strong_connectivity_matches_reachability(g in strongly_connected()) {
        let reach = common::reachability(&g);
        prop_assert!(reach.iter().flatten().all(|&r| r));
        prop_assert!(g.is_strongly_connected());
        prop_assert!(g.has_spanning_tree());
    }

    #[test]
    fn laplacian_rows_sum_to_zero(g in strongly_connected()) {
        let l = g.laplacian();
        for i in 0..g.n() {
            let row: f64 = (0..g.n()).map(|j| l[(i, j)]).sum();
            prop_assert!(row.abs() < 1e-12);
        }
    }

    #[test]
    fn omega_is_positive_normalized_and_matches_oracle(g in strongly_connected()) {
        let omega = g.left_eigenvector().unwrap();
        prop_assert!((omega.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(omega.iter().all(|&w| w > 0.0));
        if g.n() > 1 {
            let oracle = common::omega_oracle(&g).unwrap();
            for (a, b) in omega.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn lhat_is_positive_semidefinite(g in strongly_connected()) {
        let omega = g.left_eigenvector().unwrap();
        let lhat = g.lhat(&omega).unwrap();
        prop_assert!((lhat.clone() - lhat.transpose()).amax() < 1e-12);
        prop_assert!(min_symmetric_eigenvalue(&lhat) >= -1e-10);
    }

    #[test]
    fn rooted_graphs_decompose_lower_triangular(g in rooted()) {
        prop_assert!(g.has_spanning_tree());
        let dec = g.perron_frobenius_form().unwrap();
        let mut perm = dec.permutation.clone();
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..g.n()).collect::<Vec<_>>());
        prop_assert_eq!(dec.block_sizes().iter().sum::<usize>(), g.n());
        prop_assert!(dec.is_lower_block_triangular(&g));

        // The root block reaches every node.
        let reach = common::reachability(&g);
        let root = dec.blocks[0][0];
        prop_assert!(reach[root].iter().all(|&r| r));

        for b in 1..dec.blocks.len() {
            let block = dec.diagonal_block(&g, b);
            prop_assert!(is_nonsingular_m_matrix(&block));
            let inv = common::inverse(&block).expect("nonsingular");
            prop_assert!(inv.iter().flatten().all(|&x| x >= -1e-12));
        }
    }

    #[test]
    fn spec_round_trip(g in strongly_connected()) {
        let back = DirectedGraph::try_from(&g.to_spec()).unwrap();
        for i in 0..g.n() {
            for j in 0..g.n() {
                prop_assert_eq!(back.weight(i, j), g.weight(i, j));
            }
        }
    }
}

#[test]
fn disconnected_graph_is_refused() {
    let g = DirectedGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
    assert!(!g.has_spanning_tree());
    assert!(g.perron_frobenius_form().is_err());
    assert!(g.left_eigenvector().is_err());
}
