use embedtune_core::compile::{aligned_state, compile, CompensationConfig, PhysicalProblem};
use embedtune_core::embedding::{embed_clique, Embedding};
use embedtune_core::instance::{gen_csg, Instance, ProblemKind, Spin};
use embedtune_core::postprocess::{
    descend, descent_order, filter_aligned, greedy_descent, is_local_minimum, map_majority, map_random,
    LogicalSampleSet,
};
use embedtune_core::sampler::{SampleSet, SamplerParams};
use embedtune_core::topology::build_chimera;
use proptest::prelude::*;

/// Clique of `n` on the smallest graph, compiled uniformly.
fn setup(n: usize, seed: u64) -> (Instance, Embedding, PhysicalProblem) {
    let g = build_chimera(n.div_ceil(4), &[], &[]).unwrap();
    let emb = embed_clique(n, &g).unwrap();
    let inst = gen_csg(n, seed).unwrap();
    let p = compile(&inst, &emb, &g, 2.0, &CompensationConfig::default()).unwrap();
    (inst, emb, p)
}

fn sample_set(p: &PhysicalProblem, samples: Vec<Vec<Spin>>) -> SampleSet {
    SampleSet {
        provenance: None,
        qubits: p.qubits(),
        energies: samples.iter().map(|z| p.energy(z).unwrap()).collect(),
        streams: (0..samples.len() as u64).collect(),
        samples,
        params: SamplerParams::default(),
    }
}

/// Physical state with chain `a` given explicit per-position spins.
fn with_chain(p: &PhysicalProblem, emb: &Embedding, base: &[Spin], a: usize, spins: &[Spin]) -> Vec<Spin> {
    let mut z = aligned_state(p, emb, base);
    let idx = p.index_of();
    for (q, &s) in emb.chains[a].iter().zip(spins) {
        z[idx[q]] = s;
    }
    z
}

fn plus_rate(set: &LogicalSampleSet, a: usize) -> f64 {
    set.samples.iter().filter(|x| x[a] == 1).count() as f64 / set.len() as f64
}

#[test]
fn ties_and_random_picks_are_fair() {
    // Chains of length 2: a split chain is both a random pick and a tie.
    let (inst, emb, p) = setup(4, 1);
    assert_eq!(emb.chains[0].len(), 2);
    let trials = 10_000;
    let z = with_chain(&p, &emb, &[1; 4], 0, &[1, -1]);
    let set = sample_set(&p, vec![z; trials]);
    let sigma3 = 3.0 * (0.25 / trials as f64).sqrt();
    for logical in [map_random(&set, &emb, &inst, 8).unwrap(), map_majority(&set, &emb, &inst, 8).unwrap()] {
        let rate = plus_rate(&logical, 0);
        assert!((rate - 0.5).abs() <= sigma3, "{}: {rate}", logical.method);
        assert!(logical.samples.iter().all(|x| x[1..] == [1, 1, 1]));
    }
}

#[test]
fn majority_of_three() {
    let (inst, emb, p) = setup(8, 1);
    assert_eq!(emb.chains[0].len(), 3);
    let z = with_chain(&p, &emb, &[-1; 8], 0, &[1, -1, 1]);
    let mv = map_majority(&sample_set(&p, vec![z]), &emb, &inst, 0).unwrap();
    assert_eq!(mv.samples[0][0], 1);
    assert!(!mv.aligned[0]);
}

#[test]
fn aligned_filter_counts() {
    let (inst, emb, p) = setup(8, 2);
    let mut samples = Vec::new();
    for k in 0..10 {
        let base: Vec<Spin> = (0..8).map(|i| if (k >> (i % 4)) & 1 == 1 { -1 } else { 1 }).collect();
        samples.push(if k % 10 < 3 {
            aligned_state(&p, &emb, &base)
        } else {
            with_chain(&p, &emb, &base, k % 8, &[base[k % 8], -base[k % 8], base[k % 8]])
        });
    }
    let a = filter_aligned(&sample_set(&p, samples), &emb, &inst).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a.source, vec![0, 1, 2]);
    assert!(a.aligned.iter().all(|&x| x));
}

#[test]
fn missing_chain_qubits_are_an_error() {
    let (inst, emb, p) = setup(4, 1);
    let mut set = sample_set(&p, vec![aligned_state(&p, &emb, &[1; 4])]);
    let drop: Vec<usize> =
        set.qubits.iter().enumerate().filter(|(_, q)| emb.chains[0].contains(q)).map(|(i, _)| i).collect();
    for &i in drop.iter().rev() {
        set.qubits.remove(i);
        set.samples[0].remove(i);
    }
    assert!(map_majority(&set, &emb, &inst, 0).is_err());
    assert!(map_random(&set, &emb, &inst, 0).is_err());
    assert!(filter_aligned(&set, &emb, &inst).is_err());
}

#[test]
fn descent_on_a_ferromagnetic_path() {
    let inst = Instance::from_terms(ProblemKind::Clique, vec![0.0; 3], &[(0, 1, -1.0), (1, 2, -1.0)]).unwrap();
    let mut x = vec![1, 1, -1];
    let updates = descend(&mut x, &inst.neighbors(), &inst.h, &[0, 1, 2]);
    assert_eq!((x, updates), (vec![1, 1, 1], 1));
    let mut fixed = vec![-1, -1, -1];
    assert_eq!(descend(&mut fixed, &inst.neighbors(), &inst.h, &[2, 1, 0]), 0);
    assert_eq!(fixed, vec![-1, -1, -1]);
}

#[test]
fn descent_order_is_a_seeded_permutation() {
    let a = descent_order(20, 3);
    let mut sorted = a.clone();
    sorted.sort();
    assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    assert_eq!(a, descent_order(20, 3));
    assert_ne!(a, descent_order(20, 4));
}

proptest! {
    #[test]
    fn mappings_agree_on_aligned_states(seed in any::<u64>(), n in 2usize..13, bits in any::<u64>(), map_seed in any::<u64>()) {
        let (inst, emb, p) = setup(n, seed);
        let x: Vec<Spin> = (0..n).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect();
        let set = sample_set(&p, vec![aligned_state(&p, &emb, &x)]);
        let r = map_random(&set, &emb, &inst, map_seed).unwrap();
        let mv = map_majority(&set, &emb, &inst, map_seed).unwrap();
        let a = filter_aligned(&set, &emb, &inst).unwrap();
        prop_assert_eq!(&r.samples[0], &x);
        prop_assert_eq!(&mv.samples[0], &x);
        prop_assert_eq!(&a.samples[0], &x);
        prop_assert!((r.energies[0] - inst.energy(&x).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn descent_reaches_local_minima_downhill(seed in any::<u64>(), n in 2usize..33, order_seed in any::<u64>(), bits in prop::collection::vec(any::<u64>(), 1..20)) {
        let inst = gen_csg(n, seed).unwrap();
        let samples: Vec<Vec<Spin>> = bits.iter().map(|b| (0..n).map(|i| if b >> (i % 64) & 1 == 1 { -1 } else { 1 }).collect()).collect();
        let start = LogicalSampleSet {
            method: "mv".into(),
            energies: samples.iter().map(|x| inst.energy(x).unwrap()).collect(),
            aligned: vec![true; samples.len()],
            gd_updates: vec![None; samples.len()],
            source: (0..samples.len()).collect(),
            samples,
            provenance: None,
        };
        let out = greedy_descent(&start, &inst, order_seed).unwrap();
        prop_assert_eq!(out.method.as_str(), "mv+gd");
        for i in 0..out.len() {
            prop_assert!(is_local_minimum(&out.samples[i], &inst));
            prop_assert!(out.energies[i] <= start.energies[i]);
            prop_assert!((out.energies[i] - inst.energy(&out.samples[i]).unwrap()).abs() < 1e-9);
            prop_assert_eq!(out.gd_updates[i] == Some(0), out.samples[i] == start.samples[i]);
        }
        prop_assert_eq!(out, greedy_descent(&start, &inst, order_seed).unwrap());
    }
}
