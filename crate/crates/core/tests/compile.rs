use embedtune_core::compile::{
    aligned_state, chain_metric, chain_strength, chi_from_positions, chi_pair, chi_summed, compensate, compile,
    edge_susceptibilities, normalized_factors, rescale, uniform_spread, CompensationConfig, PhysicalProblem,
    Provenance, Xi,
};
use embedtune_core::embedding::{embed_clique, embed_cubic};
use embedtune_core::instance::{gen_bsg, gen_csg, Instance, ProblemKind, Spin};
use embedtune_core::topology::{build_chimera, PhysicalGraph};
use proptest::prelude::*;

fn chimera(m: usize) -> PhysicalGraph {
    build_chimera(m, &[], &[]).unwrap()
}

fn path(len: usize) -> Vec<Vec<usize>> {
    (0..len).map(|i| (0..len).map(|j| i.abs_diff(j)).collect()).collect()
}

fn spins(n: usize, bits: u64) -> Vec<Spin> {
    (0..n).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect()
}

#[test]
fn chain_strength_examples() {
    let csg = gen_csg(64, 1).unwrap();
    assert!((chain_strength(&csg, 1.6).unwrap() - 12.8).abs() < 1e-12);
    let bsg = gen_bsg(64, 1).unwrap();
    assert!((bsg.coupling_variance() - 0.5).abs() < 0.01);
    let pair = Instance::from_terms(ProblemKind::Clique, vec![0.0; 2], &[(0, 1, -1.0)]).unwrap();
    assert!((chain_strength(&pair, 1.3).unwrap() - 1.3 * 2f64.sqrt()).abs() < 1e-12);
    assert!(chain_strength(&pair, 0.0).is_err());
}

#[test]
fn uniform_spreading_divides_fields_and_couplings() {
    // Two stacked lattice sites: two four-qubit chains.
    let g = chimera(2);
    let emb = embed_cubic([1, 1, 2], &g).unwrap();
    let inst = Instance::from_terms(ProblemKind::Cubic, vec![2.0, 0.0], &[(0, 1, 1.0)]).unwrap();
    let p = uniform_spread(&inst, &emb, &g, 3.0).unwrap();
    for (q, v) in &p.h {
        let want = if emb.chains[0].contains(q) { 0.5 } else { 0.0 };
        assert_eq!(*v, want, "field on qubit {q}");
    }
    let (chain, inter): (Vec<_>, Vec<_>) = p.j.iter().partition(|&&(a, b, _)| p.is_chain_coupler(a, b));
    assert!(chain.iter().all(|&&(_, _, v)| v == -3.0));
    assert!(!inter.is_empty());
    assert!(inter.iter().all(|&&(_, _, v)| v == 1.0 / inter.len() as f64));
}

#[test]
fn end_to_end_three_chains_susceptibility() {
    let chi = chi_from_positions(&path(3), &path(3), &[(2, 0)], 3.0);
    assert!((chi - (-2.0f64 / 3.0).exp()).abs() < 1e-15);
    assert!((chi - 0.5134).abs() < 1e-4);
    assert_eq!(chi_from_positions(&path(1), &path(1), &[(0, 0)], 2.0), 1.0);
}

#[test]
fn end_connections_get_larger_couplings() {
    // Center-connected vs end-connected pairs of three-qubit chains.
    for xi in [1.0, 3.0, 10.0] {
        let center = chi_from_positions(&path(3), &path(3), &[(1, 1)], xi);
        let end = chi_from_positions(&path(3), &path(3), &[(0, 0)], xi);
        let f = normalized_factors(&[center, end]);
        assert!(f[1] > f[0], "xi {xi}: {f:?}");
    }
}

#[test]
fn rescale_examples() {
    let g = chimera(1);
    let problem = |lambda: f64, coupling: f64| PhysicalProblem {
        graph: g.spec(),
        h: vec![(0, 0.0), (4, 0.0), (5, 0.0)],
        j: vec![(0, 4, coupling), (4, 5, -lambda)],
        lambda,
        rescale: 1.0,
        chain_couplers: vec![(4, 5)],
        provenance: Provenance::default(),
    };
    let r = rescale(&problem(2.0, 0.5)).unwrap();
    assert_eq!(r.rescale, 1.0);
    assert_eq!(r.j[1].2, -2.0);
    let r = rescale(&problem(12.8, 1.0)).unwrap();
    assert_eq!(r.rescale, 0.15625);
    r.check_ranges().unwrap();
    assert!(problem(12.8, 1.0).check_ranges().is_err());
}

#[test]
fn compensation_at_infinite_xi_is_uniform_spreading() {
    let g = chimera(4);
    let emb = embed_clique(16, &g).unwrap();
    let inst = gen_csg(16, 2).unwrap();
    let u = uniform_spread(&inst, &emb, &g, 4.0).unwrap();
    let c = compensate(&inst, &emb, &g, 4.0, &CompensationConfig::susceptibility(Xi::Infinite)).unwrap();
    assert_eq!((&u.h, &u.j), (&c.h, &c.j));
}

#[test]
fn single_edge_problems_are_unchanged() {
    // One logical edge: its factor is its own geometric mean.
    let g = chimera(1);
    let emb = embed_clique(2, &g).unwrap();
    let inst = gen_csg(2, 4).unwrap();
    let u = uniform_spread(&inst, &emb, &g, 2.0).unwrap();
    let c = compensate(&inst, &emb, &g, 2.0, &CompensationConfig::susceptibility(Xi::Value(0.7))).unwrap();
    assert_eq!(u.j, c.j);
}

#[test]
fn chi_pair_matches_positions() {
    let g = chimera(2);
    let emb = embed_clique(8, &g).unwrap();
    let a = chi_pair(&emb, &g, 0, 5, 2.0).unwrap();
    assert!(a > 0.0 && a <= 1.0);
    assert!(chi_pair(&emb, &g, 0, 0, 2.0).is_err());
    assert!(chi_pair(&emb, &g, 0, 5, 0.0).is_err());
}

proptest! {
    #[test]
    fn aligned_energy_identity(seed in any::<u64>(), n in 2usize..20, bits in any::<u64>(), lambda0 in 0.3f64..3.0) {
        let g = chimera(n.div_ceil(4));
        let emb = embed_clique(n, &g).unwrap();
        let inst = gen_csg(n, seed).unwrap();
        let lambda = chain_strength(&inst, lambda0).unwrap();
        let p = compile(&inst, &emb, &g, lambda, &CompensationConfig::default()).unwrap();
        let x = spins(n, bits);
        let phys = p.energy(&aligned_state(&p, &emb, &x)).unwrap();
        let lhs = phys / p.rescale + lambda * p.chain_couplers.len() as f64;
        prop_assert!((lhs - inst.energy(&x).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn rescaling_scales_every_energy(seed in any::<u64>(), n in 2usize..16, bits in any::<u64>()) {
        let g = chimera(n.div_ceil(4));
        let emb = embed_clique(n, &g).unwrap();
        let inst = gen_csg(n, seed).unwrap();
        let raw = uniform_spread(&inst, &emb, &g, 5.0).unwrap();
        let scaled = rescale(&raw).unwrap();
        scaled.check_ranges().unwrap();
        let z: Vec<Spin> = (0..raw.num_qubits()).map(|i| if bits >> (i % 64) & 1 == 1 { -1 } else { 1 }).collect();
        let (a, b) = (raw.energy(&z).unwrap(), scaled.energy(&z).unwrap());
        prop_assert!((b - scaled.rescale * a).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn chi_bounds_and_monotonicity(la in 1usize..9, lb in 1usize..9, p in 0usize..8, q in 0usize..8, extra in 0usize..8, xi in 0.2f64..20.0) {
        let couplers = [(p % la, q % lb), (extra % la, (extra + 1) % lb)];
        for k in 1..=2 {
            let c = chi_from_positions(&path(la), &path(lb), &couplers[..k], xi);
            let wider = chi_from_positions(&path(la), &path(lb), &couplers[..k], xi * 1.5);
            prop_assert!(c > 0.0 && c <= 1.0);
            prop_assert!(wider >= c);
            prop_assert_eq!(chi_from_positions(&path(la), &path(lb), &couplers[..k], f64::INFINITY), 1.0);
            prop_assert_eq!(c == 1.0, la == 1 && lb == 1);
        }
        // One coupler: the general form equals the factorized form.
        let one = &couplers[..1];
        let general = chi_from_positions(&path(la), &path(lb), one, xi);
        prop_assert!((general - chi_summed(&path(la), &path(lb), one, xi)).abs() <= 1e-14);
    }

    #[test]
    fn factors_have_unit_geometric_mean(seed in any::<u64>(), xi in 0.5f64..20.0) {
        let g = chimera(4);
        let emb = embed_clique(16, &g).unwrap();
        let inst = gen_csg(16, seed).unwrap();
        let chi = edge_susceptibilities(&inst, &emb, &g, Xi::Value(xi)).unwrap();
        let f = normalized_factors(&chi);
        let mean_log = f.iter().map(|v| v.ln()).sum::<f64>() / f.len() as f64;
        prop_assert!(mean_log.abs() <= 1e-12);
    }

    #[test]
    fn path_metric_is_positional(len in 1usize..10) {
        let g = chimera(8);
        let emb = embed_clique(4 * (len - 1).max(1), &g).unwrap();
        let chain = &emb.chains[0];
        let d = chain_metric(&g, chain).unwrap();
        for (i, row) in d.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                prop_assert_eq!(v, i.abs_diff(j));
            }
        }
    }
}
