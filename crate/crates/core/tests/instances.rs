use embedtune_core::instance::{
    cdma_rows, cdma_sigma0_sq, gen_3dsg, gen_bsg, gen_cdma, gen_csg, Instance, ProblemKind, Spin, Vacancies,
};
use proptest::prelude::*;

fn spins(n: usize, bits: u64) -> Vec<Spin> {
    (0..n).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect()
}

#[test]
fn two_spin_energies() {
    let inst = Instance::from_terms(ProblemKind::Clique, vec![0.0; 2], &[(0, 1, 1.0)]).unwrap();
    assert_eq!(inst.energy(&[1, -1]).unwrap(), -1.0);
    assert_eq!(inst.energy(&[1, 1]).unwrap(), 1.0);
    assert!(inst.energy(&[1]).is_err());
}

#[test]
fn generator_edge_counts() {
    let k4 = gen_csg(4, 1).unwrap();
    assert_eq!(k4.j.len(), 6);
    assert!(k4.j.iter().all(|&(_, _, v)| v == 1.0 || v == -1.0));
    assert_eq!(gen_bsg(64, 1).unwrap().j.len(), 1024);
    assert_eq!(gen_3dsg([4, 4, 4], 1, None).unwrap().j.len(), 144);
}

#[test]
fn bsg_couples_only_across_halves() {
    let inst = gen_bsg(16, 3).unwrap();
    assert!(inst.j.iter().all(|&(a, b, _)| a < 8 && b >= 8));
    // Half of all pairs are absent, so the all-pairs variance is close to 1/2.
    assert!((inst.coupling_variance() - 8.0 * 8.0 / (16.0 * 15.0 / 2.0)).abs() < 1e-12);
}

#[test]
fn vacancies_remove_sites_and_edges() {
    let full = gen_3dsg([3, 3, 3], 5, None).unwrap();
    let vac = Vacancies { sites: vec![13], edges: vec![(0, 1)] };
    let cut = gen_3dsg([3, 3, 3], 5, Some(&vac)).unwrap();
    assert!(cut.j.iter().all(|&(a, b, _)| a != 13 && b != 13 && (a, b) != (0, 1)));
    let removed = full.j.iter().filter(|&&(a, b, _)| a == 13 || b == 13 || (a, b) == (0, 1)).count();
    assert_eq!(cut.j.len(), full.j.len() - removed);
}

#[test]
fn cdma_constants() {
    assert!((cdma_sigma0_sq(7.0) - 0.099_763).abs() < 1e-6);
    assert_eq!(cdma_rows(64, 1.4), 90);
}

#[test]
fn cdma_energy_of_sent_bits_is_half_noise_norm() {
    for seed in 0..20 {
        let inst = gen_cdma(16, 1.4, 7.0, seed).unwrap();
        let payload = inst.cdma.as_ref().unwrap();
        let half_norm = payload.noise.iter().map(|v| v * v).sum::<f64>() / 2.0;
        let e = inst.energy(&payload.bits).unwrap();
        assert!((e - half_norm).abs() < 1e-9 * half_norm.max(1.0), "seed {seed}: {e} vs {half_norm}");
    }
}

#[test]
fn cdma_mean_energy_of_sent_bits() {
    let (n, seeds) = (64, 10_000u64);
    let rows = cdma_rows(n, 1.4) as f64;
    let mean = (0..seeds)
        .map(|s| {
            let inst = gen_cdma(n, 1.4, 7.0, s).unwrap();
            inst.energy(&inst.cdma.as_ref().unwrap().bits).unwrap()
        })
        .sum::<f64>()
        / seeds as f64;
    assert!((mean / (rows / 2.0) - 1.0).abs() < 0.03, "mean {mean}, expected {}", rows / 2.0);
}

#[test]
fn cdma_coupling_variance_follows_the_code_statistics() {
    // J_ij = (1/s0^2) sum_mu W_mu,i W_mu,j with W = +-1/sqrt(n): a sum of M
    // independent +-1/n terms, so Var(J) = M / (s0^4 n^2).
    let (n, load, snr) = (64, 1.4, 7.0);
    let rows = cdma_rows(n, load) as f64;
    let s0sq = cdma_sigma0_sq(snr);
    let expected = rows / (s0sq * s0sq * (n * n) as f64);
    let (mut sum, mut count) = (0.0, 0usize);
    for seed in 0..200 {
        let inst = gen_cdma(n, load, snr, seed).unwrap();
        for &(_, _, v) in &inst.j {
            sum += v * v;
        }
        count += n * (n - 1) / 2;
    }
    let measured = sum / count as f64;
    assert!((measured / expected - 1.0).abs() < 0.02, "{measured} vs {expected}");
}

proptest! {
    #[test]
    fn generators_are_pure(seed in any::<u64>(), n in 2usize..24) {
        prop_assert_eq!(gen_csg(n, seed).unwrap(), gen_csg(n, seed).unwrap());
        prop_assert_eq!(gen_bsg(2 * (n / 2).max(1), seed).unwrap(), gen_bsg(2 * (n / 2).max(1), seed).unwrap());
        prop_assert_eq!(gen_cdma(n, 1.4, 7.0, seed).unwrap(), gen_cdma(n, 1.4, 7.0, seed).unwrap());
    }

    #[test]
    fn spin_flip_symmetry(seed in any::<u64>(), n in 2usize..20, bits in any::<u64>()) {
        let inst = gen_csg(n, seed).unwrap();
        let x = spins(n, bits);
        let neg: Vec<Spin> = x.iter().map(|s| -s).collect();
        prop_assert_eq!(inst.energy(&x).unwrap(), inst.energy(&neg).unwrap());
    }

    #[test]
    fn serde_round_trip(seed in any::<u64>(), n in 2usize..12) {
        let inst = gen_cdma(n, 1.4, 7.0, seed).unwrap();
        let back: Instance = serde_json::from_str(&serde_json::to_string(&inst).unwrap()).unwrap();
        prop_assert_eq!(back, inst);
    }
}
