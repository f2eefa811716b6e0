//! Exact classical oracles: exhaustive minimization, transfer-matrix chain
//! correlations, and exhaustive Gibbs correlations of small systems.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, Spin};

pub const BRUTE_FORCE_CAP: usize = 24;
pub const ENUMERATION_CAP: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub min_energy: f64,
    pub argmin: Vec<Spin>,
    /// Number of states within 1e-9 (relative) of the minimum.
    pub degeneracy: u64,
    /// Gibbs `<x_a x_b>` at some inverse temperature, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<Vec<Vec<f64>>>,
}

fn spins_of(bits: u64, n: usize) -> Vec<Spin> {
    (0..n).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect()
}

/// Exhaustive minimum. With no fields the last spin is pinned to `+1` and
/// the degeneracy doubled.
pub fn brute_min(instance: &Instance) -> Result<OracleResult> {
    let n = instance.n;
    if n > BRUTE_FORCE_CAP {
        return Err(Error::SizeCap { what: "exhaustive minimization".into(), size: n, cap: BRUTE_FORCE_CAP });
    }
    if n == 0 {
        return Ok(OracleResult { min_energy: instance.offset, argmin: Vec::new(), degeneracy: 1, correlations: None });
    }
    let symmetric = !instance.has_fields();
    let free = if symmetric { n - 1 } else { n };
    let neighbors = instance.neighbors();
    let high = free.min(8).min(free);
    let low = free - high;

    let blocks: Vec<(f64, u64, Vec<f64>)> = (0..1u64 << high)
        .into_par_iter()
        .map(|block| {
            let mut x = spins_of(block << low, n);
            let mut e = instance.energy_unchecked(&x);
            let mut field: Vec<f64> = (0..n)
                .map(|a| instance.h[a] + neighbors[a].iter().map(|&(b, v)| v * x[b] as f64).sum::<f64>())
                .collect();
            let mut best = (e, x.clone());
            let mut energies = Vec::with_capacity(1 << low);
            energies.push(e);
            for k in 1..1u64 << low {
                let i = k.trailing_zeros() as usize;
                e -= 2.0 * x[i] as f64 * field[i];
                x[i] = -x[i];
                let d = 2.0 * x[i] as f64;
                for &(b, v) in &neighbors[i] {
                    field[b] += d * v;
                }
                energies.push(e);
                if e < best.0 {
                    best = (e, x.clone());
                }
            }
            let bits = best.1.iter().enumerate().fold(0u64, |acc, (i, &s)| acc | (((s < 0) as u64) << i));
            (best.0, bits, energies)
        })
        .collect();

    let (_, bits, _) = blocks.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("at least one block");
    let argmin = spins_of(*bits, n);
    let min_energy = instance.energy_unchecked(&argmin);
    let tol = 1e-9 * min_energy.abs().max(1.0);
    let count: u64 = blocks.iter().map(|(_, _, es)| es.iter().filter(|&&e| e <= min_energy + tol).count() as u64).sum();
    Ok(OracleResult { min_energy, argmin, degeneracy: if symmetric { 2 * count } else { count }, correlations: None })
}

/// `brute_min` plus the exact Gibbs correlations at `beta` (n <= 20).
pub fn brute_min_with_correlations(instance: &Instance, beta: f64) -> Result<OracleResult> {
    let mut r = brute_min(instance)?;
    r.correlations = Some(gibbs_correlations(&instance.h, &instance.j, beta)?);
    Ok(r)
}

type Mat2 = [[f64; 2]; 2];

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

fn mul(x: &Mat2, y: &Mat2) -> Mat2 {
    let e = |r: usize, c: usize| x[r][0] * y[0][c] + x[r][1] * y[1][c];
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

/// `u^T M u` with `u = (1, 1)`: the sum over both end spins.
fn sum_entries(m: &Mat2) -> f64 {
    m[0][0] + m[0][1] + m[1][0] + m[1][1]
}

/// Exact `<z_i z_j>` of a ferromagnetic open chain (`-lambda` couplers) at
/// inverse temperature `beta`, by transfer matrices.
pub fn chain_gibbs_correlations(len: usize, beta: f64, lambda: f64) -> Result<Vec<Vec<f64>>> {
    if len == 0 || len > ENUMERATION_CAP {
        return Err(Error::SizeCap { what: "transfer-matrix chain".into(), size: len, cap: ENUMERATION_CAP });
    }
    let k = beta * lambda;
    let norm = 2.0 * k.cosh();
    let (a, b) = (k.exp() / norm, (-k).exp() / norm);
    let t = [[a, b], [b, a]];
    let s = [[1.0, 0.0], [0.0, -1.0]];
    let power = |p: usize| (0..p).fold(IDENTITY, |m, _| mul(&m, &t));
    let z = sum_entries(&power(len - 1));
    Ok((0..len)
        .map(|i| {
            (0..len)
                .map(|j| {
                    let (lo, hi) = (i.min(j), i.max(j));
                    if lo == hi {
                        return 1.0;
                    }
                    let m = [power(lo), s, power(hi - lo), s, power(len - 1 - hi)]
                        .iter()
                        .fold(IDENTITY, |acc, x| mul(&acc, x));
                    sum_entries(&m) / z
                })
                .collect()
        })
        .collect())
}

/// Exact Gibbs `<z_i z_j>` of an arbitrary small Ising system with energy
/// `sum_edges w z_i z_j + sum_i h_i z_i`, by enumeration.
pub fn gibbs_correlations(h: &[f64], edges: &[(usize, usize, f64)], beta: f64) -> Result<Vec<Vec<f64>>> {
    let n = h.len();
    if n == 0 || n > ENUMERATION_CAP {
        return Err(Error::SizeCap { what: "Gibbs enumeration".into(), size: n, cap: ENUMERATION_CAP });
    }
    let energy = |bits: u64| {
        let z = |i: usize| if bits >> i & 1 == 1 { -1.0 } else { 1.0 };
        edges.iter().map(|&(i, j, w)| w * z(i) * z(j)).sum::<f64>()
            + h.iter().enumerate().map(|(i, v)| v * z(i)).sum::<f64>()
    };
    let states = 1u64 << n;
    let energies: Vec<f64> = (0..states).into_par_iter().map(energy).collect();
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let chunk = 1u64 << n.min(12);
    let (z, acc) = (0..states.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; n * n];
            let mut z = 0.0;
            for bits in c * chunk..((c + 1) * chunk).min(states) {
                let w = (-beta * (energies[bits as usize] - e0)).exp();
                z += w;
                for i in 0..n {
                    let si = if bits >> i & 1 == 1 { -w } else { w };
                    for j in i + 1..n {
                        acc[i * n + j] += if bits >> j & 1 == 1 { -si } else { si };
                    }
                }
            }
            (z, acc)
        })
        .reduce(
            || (0.0, vec![0.0; n * n]),
            |(za, mut a), (zb, b)| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                (za + zb, a)
            },
        );
    let mut c = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            c[i][j] = acc[i * n + j] / z;
            c[j][i] = c[i][j];
        }
    }
    Ok(c)
}

/// Path edges `-lambda` of a chain occupying qubits `start..start + len`.
pub fn chain_edges(start: usize, len: usize, lambda: f64) -> Vec<(usize, usize, f64)> {
    (start..start + len.saturating_sub(1)).map(|i| (i, i + 1, -lambda)).collect()
}

/// Inter-chain correlation of two path chains joined by `couplers`
/// (`(position in a, position in b)`, each programmed to `coupling`).
/// Returns the geometric mean of `|<z_i z_j>|` over `i in a, j in b`,
/// signed like the mean correlation; zero if any pair is uncorrelated.
pub fn two_chain_gibbs_correlations(
    len_a: usize,
    len_b: usize,
    couplers: &[(usize, usize)],
    beta: f64,
    lambda: f64,
    coupling: f64,
) -> Result<f64> {
    let n = len_a + len_b;
    if n > ENUMERATION_CAP {
        return Err(Error::SizeCap { what: "two-chain enumeration".into(), size: n, cap: ENUMERATION_CAP });
    }
    let mut edges = chain_edges(0, len_a, lambda);
    edges.extend(chain_edges(len_a, len_b, lambda));
    edges.extend(couplers.iter().map(|&(p, q)| (p, len_a + q, coupling)));
    let c = gibbs_correlations(&vec![0.0; n], &edges, beta)?;
    let mut log_sum = 0.0;
    let mut total = 0.0;
    for row in &c[..len_a] {
        for &v in &row[len_a..] {
            if v == 0.0 {
                return Ok(0.0);
            }
            log_sum += v.abs().ln();
            total += v;
        }
    }
    let mag = (log_sum / (len_a * len_b) as f64).exp();
    Ok(if total < 0.0 { -mag } else { mag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::ProblemKind;

    #[test]
    fn two_spin_antiferromagnet() {
        let inst = Instance::from_terms(ProblemKind::Clique, vec![0.0; 2], &[(0, 1, 1.0)]).unwrap();
        let r = brute_min(&inst).unwrap();
        assert_eq!(r.min_energy, -1.0);
        assert_eq!(r.degeneracy, 2);
    }

    #[test]
    fn single_field() {
        let mut inst = Instance::from_terms(ProblemKind::Cdma, vec![-1.0], &[]).unwrap();
        inst.n = 1;
        let r = brute_min(&inst).unwrap();
        assert_eq!(r.min_energy, -1.0);
        assert_eq!(r.argmin, vec![1]);
    }

    #[test]
    fn chain_diagonal_is_one() {
        let c = chain_gibbs_correlations(5, 0.7, 1.0).unwrap();
        for (i, row) in c.iter().enumerate() {
            assert_eq!(row[i], 1.0);
        }
    }
}
