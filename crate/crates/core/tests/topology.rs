use std::collections::BTreeSet;

use embedtune_core::topology::{build_chimera, ideal_couplers, qubit_id, site_of, subgraph_distance, Qubit};
use proptest::prelude::*;

#[test]
fn published_and_small_sizes() {
    assert_eq!(build_chimera(16, &[], &[]).unwrap().num_qubits(), 2048);
    let c1 = build_chimera(1, &[], &[]).unwrap();
    assert_eq!((c1.num_qubits(), c1.num_couplers()), (8, 16));
    let c2 = build_chimera(2, &[], &[]).unwrap();
    assert_eq!((c2.num_qubits(), c2.num_couplers()), (32, 80));
}

#[test]
fn ideal_c2_edges_by_enumeration() {
    // Independent count: intra-cell K44 plus shore-wise links between
    // neighboring cells, enumerated from sites.
    let m = 2;
    let g = build_chimera(m, &[], &[]).unwrap();
    let mut count = 0;
    for a in 0..8 * m * m {
        for b in a + 1..8 * m * m {
            let (sa, sb) = (site_of(m, a as Qubit), site_of(m, b as Qubit));
            let same_cell = sa.row == sb.row && sa.col == sb.col;
            let intra = same_cell && sa.shore != sb.shore;
            let inter = !same_cell
                && sa.shore == sb.shore
                && sa.index == sb.index
                && sa.row.abs_diff(sb.row) + sa.col.abs_diff(sb.col) == 1
                && match sa.shore {
                    embedtune_core::topology::Shore::Vertical => sa.col == sb.col,
                    embedtune_core::topology::Shore::Horizontal => sa.row == sb.row,
                };
            if intra || inter {
                count += 1;
                assert!(g.has_coupler(a as Qubit, b as Qubit), "missing ({a}, {b})");
            }
        }
    }
    assert_eq!(count, g.num_couplers());
}

#[test]
fn distance_examples() {
    let g = build_chimera(2, &[], &[]).unwrap();
    let q = |r, c, s, i| g.qubit(r, c, s, i);
    use embedtune_core::topology::Shore::*;
    // A five-qubit path: two horizontal hops, a vertical bridge, then down.
    let path = [
        q(0, 1, Horizontal, 0),
        q(0, 0, Horizontal, 0),
        q(0, 0, Vertical, 0),
        q(1, 0, Vertical, 0),
        q(1, 0, Horizontal, 1),
    ];
    assert_eq!(subgraph_distance(&g, &path, path[0], path[0]).unwrap(), Some(0));
    assert_eq!(subgraph_distance(&g, &path, path[0], path[1]).unwrap(), Some(1));
    assert_eq!(subgraph_distance(&g, &path, path[0], path[4]).unwrap(), Some(4));
    assert_eq!(subgraph_distance(&g, &path[..2], path[0], path[1]).unwrap(), Some(1));
    let gapped = [path[0], path[4]];
    assert_eq!(subgraph_distance(&g, &gapped, path[0], path[4]).unwrap(), None);
}

proptest! {
    #[test]
    fn ids_round_trip(m in 1usize..10, raw in 0usize..800) {
        let q = (raw % (8 * m * m)) as Qubit;
        prop_assert_eq!(qubit_id(m, site_of(m, q)), q);
    }

    #[test]
    fn defect_qubit_removes_only_its_couplers(m in 1usize..5, raw in 0usize..200) {
        let dead = (raw % (8 * m * m)) as Qubit;
        let full = build_chimera(m, &[], &[]).unwrap();
        let g = build_chimera(m, &[dead], &[]).unwrap();
        let kept: BTreeSet<_> = g.couplers().collect();
        let expected: BTreeSet<_> = ideal_couplers(m).into_iter().filter(|&(a, b)| a != dead && b != dead).collect();
        prop_assert_eq!(kept, expected);
        prop_assert_eq!(g.num_couplers(), full.num_couplers() - full.neighbors(dead).len());
        prop_assert_eq!(g.num_qubits(), 8 * m * m - 1);
    }

    #[test]
    fn distances_are_a_metric(seed in 0u64..500, size in 2usize..12) {
        // A connected subset grown by random neighbor steps.
        let g = build_chimera(3, &[], &[]).unwrap();
        let mut r = embedtune_core::rng::stream(seed, embedtune_core::rng::Purpose::RandomStates, 0);
        use rand::Rng;
        let mut subset: Vec<Qubit> = vec![(seed % 72) as Qubit];
        while subset.len() < size {
            let from = subset[r.random_range(0..subset.len())];
            let nb = g.neighbors(from);
            let next = nb[r.random_range(0..nb.len())];
            if !subset.contains(&next) {
                subset.push(next);
            }
        }
        let d = |a: Qubit, b: Qubit| subgraph_distance(&g, &subset, a, b).unwrap().expect("connected");
        for &a in &subset {
            for &b in &subset {
                prop_assert_eq!(d(a, b), d(b, a));
                for &c in &subset {
                    prop_assert!(d(a, c) <= d(a, b) + d(b, c));
                }
            }
        }
    }
}
