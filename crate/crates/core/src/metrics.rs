//! Success statistics, the sampling-time model, edge-energy symmetry
//! diagnostics and connection-pattern classes.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compile::{chain_metric, chi_from_positions, coupler_positions};
use crate::embedding::Embedding;
use crate::error::{invalid, Result};
use crate::instance::Instance;
use crate::postprocess::LogicalSampleSet;
use crate::rng::{self, Purpose};
use crate::topology::PhysicalGraph;

/// Fraction of samples with energy at or below `target` (with a relative
/// tolerance of 1e-9 to absorb summation-order differences).
pub fn success_rate(logical: &LogicalSampleSet, target: f64) -> Result<f64> {
    if logical.energies.is_empty() {
        return Err(invalid("success rate of an empty sample set is undefined"));
    }
    let tol = 1e-9 * target.abs().max(1.0);
    let hits = logical.energies.iter().filter(|&&e| e <= target + tol).count();
    Ok(hits as f64 / logical.energies.len() as f64)
}

/// Expected number of independent samples to see a success with
/// confidence `x`: `log(1 - x) / log(1 - p)`.
pub fn samples_to_solution(p: f64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("need 0 <= p <= 1 and 0 < X < 1, got p={p}, X={x}")));
    }
    Ok(if p == 0.0 {
        f64::INFINITY
    } else if p == 1.0 {
        1.0
    } else {
        (1.0 - x).ln() / (1.0 - p).ln()
    })
}

pub const DEFAULT_CONFIDENCE: f64 = 0.99;

/// Sampling-time model in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingModel {
    /// Programming time.
    pub t_p: f64,
    /// Read-out plus inter-sample delay.
    pub t_rd: f64,
    /// Anneal time per sample.
    pub t_a: f64,
    /// Mapping time.
    pub t_m: f64,
    /// Network time.
    pub t_n: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel { t_p: 10_000.0, t_rd: 219.0, t_a: 219.0, t_m: 0.0, t_n: 0.0 }
    }
}

impl TimingModel {
    pub fn with_anneal(t_a: f64) -> Self {
        TimingModel { t_a, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.t_p, self.t_rd, self.t_a, self.t_m, self.t_n];
        if all.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(invalid("timing model entries must be finite and non-negative"))
        }
    }

    /// Total time for `n` samples: `t_p + n (t_a + t_rd) + t_m + t_n`.
    pub fn access_time(&self, n: f64) -> f64 {
        self.t_p + n * (self.t_a + self.t_rd) + self.t_m + self.t_n
    }

    /// Samples that fit in `budget` microseconds of per-sample time.
    pub fn budget_samples(&self, budget: f64) -> u64 {
        (budget / (self.t_a + self.t_rd)).floor() as u64
    }
}

pub fn access_time(n: u64, t: &TimingModel) -> f64 {
    t.access_time(n as f64)
}

/// Time-to-solution two ways: anneal time only, and full access time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeToSolution {
    pub samples: f64,
    pub anneal_only_us: f64,
    pub access_us: f64,
}

pub fn time_to_solution(p: f64, x: f64, t: &TimingModel) -> Result<TimeToSolution> {
    let n = samples_to_solution(p, x)?;
    Ok(TimeToSolution { samples: n, anneal_only_us: n * t.t_a, access_us: t.access_time(n) })
}

/// Ensemble-average edge energies `e_ab`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EaeeReport {
    pub edges: Vec<(usize, usize)>,
    /// `J_ab <x_a x_b>` per instance (rows) and edge (columns).
    pub per_instance: Vec<Vec<f64>>,
    pub e: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

fn mean_and_variance(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Instance-averaged `J_ab <x_a x_b>` per logical edge. All instances must
/// share one edge set so edges correspond positionally.
pub fn eaee(ensemble: &[(&Instance, &LogicalSampleSet)]) -> Result<EaeeReport> {
    let (first, _) = ensemble.first().ok_or_else(|| invalid("edge energies need at least one instance"))?;
    let edges = first.edges();
    if edges.is_empty() {
        return Err(invalid("instance has no couplings"));
    }
    let mut per_instance = Vec::with_capacity(ensemble.len());
    for (inst, set) in ensemble {
        if inst.n != first.n || inst.j.len() != edges.len() || inst.edges() != edges {
            return Err(invalid("instances in an edge-energy ensemble must share one topology"));
        }
        if set.samples.is_empty() {
            return Err(invalid("edge energies need a nonempty sample set per instance"));
        }
        let count = set.samples.len() as f64;
        let row: Vec<f64> = inst
            .j
            .iter()
            .map(|&(a, b, v)| {
                let s: i64 = set.samples.iter().map(|x| (x[a] * x[b]) as i64).sum();
                v * s as f64 / count
            })
            .collect();
        per_instance.push(row);
    }
    Ok(summarize_eaee(edges, per_instance))
}

fn summarize_eaee(edges: Vec<(usize, usize)>, per_instance: Vec<Vec<f64>>) -> EaeeReport {
    let k = per_instance.len() as f64;
    let e: Vec<f64> = (0..edges.len()).map(|c| per_instance.iter().map(|r| r[c]).sum::<f64>() / k).collect();
    let (mean, variance) = mean_and_variance(&e);
    EaeeReport { edges, per_instance, e, mean, variance }
}

/// Percentile interval of `Var(e_ab)` from resampling instances.
pub fn bootstrap_variance(report: &EaeeReport, resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let k = report.per_instance.len();
    let mut rng = rng::stream(seed, Purpose::Bootstrap, 0);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut e = vec![0.0; report.edges.len()];
            for _ in 0..k {
                let row = &report.per_instance[rng.random_range(0..k)];
                for (acc, v) in e.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            for v in &mut e {
                *v /= k as f64;
            }
            mean_and_variance(&e).1
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile(&stats, tail), quantile(&stats, 1.0 - tail))
}

/// Percentile interval of `Var(e_ab)` from resampling sampler output with
/// the instances held fixed. Rows of each set are grouped into blocks by
/// `source / block_len` (one block per Markov chain, or per read when reads
/// are independent); each resample redraws every instance's blocks with
/// replacement.
pub fn bootstrap_variance_blocks(
    ensemble: &[(&Instance, &LogicalSampleSet)],
    block_len: usize,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if block_len == 0 {
        return Err(invalid("block length must be positive"));
    }
    let report = eaee(ensemble)?;
    // Per instance: (rows, per-edge sums of x_a x_b) of each block.
    let blocks: Vec<Vec<(u64, Vec<i64>)>> = ensemble
        .iter()
        .map(|(inst, set)| {
            let mut by_block: BTreeMap<usize, (u64, Vec<i64>)> = BTreeMap::new();
            for (x, &src) in set.samples.iter().zip(&set.source) {
                let entry = by_block.entry(src / block_len).or_insert_with(|| (0, vec![0; inst.j.len()]));
                entry.0 += 1;
                for (acc, &(a, b, _)) in entry.1.iter_mut().zip(&inst.j) {
                    *acc += (x[a] * x[b]) as i64;
                }
            }
            by_block.into_values().collect()
        })
        .collect();
    let k = ensemble.len() as f64;
    let mut stats: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, Purpose::Bootstrap, r + 1);
            let mut e = vec![0.0; report.edges.len()];
            for ((inst, _), own) in ensemble.iter().zip(&blocks) {
                let mut count = 0u64;
                let mut sums = vec![0i64; inst.j.len()];
                for _ in 0..own.len() {
                    let (c, s) = &own[rng.random_range(0..own.len())];
                    count += c;
                    for (acc, v) in sums.iter_mut().zip(s) {
                        *acc += v;
                    }
                }
                for ((acc, s), &(_, _, j)) in e.iter_mut().zip(&sums).zip(&inst.j) {
                    *acc += j * *s as f64 / count as f64 / k;
                }
            }
            mean_and_variance(&e).1
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&stats, tail), quantile(&stats, 1.0 - tail)))
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || sorted[lo] == sorted[hi] {
        // Also avoids `inf - inf` when a tail saturates.
        return sorted[lo];
    }
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Canonical description of how two chains connect: chain lengths and the
/// sorted connecting-coupler positions, minimized over reversing either
/// chain and swapping the two.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatternKey {
    pub lengths: (usize, usize),
    pub pairs: Vec<(usize, usize)>,
}

impl PatternKey {
    pub fn canonical(len_a: usize, len_b: usize, pairs: &[(usize, usize)]) -> Self {
        let mut best: Option<PatternKey> = None;
        for swap in [false, true] {
            let (la, lb) = if swap { (len_b, len_a) } else { (len_a, len_b) };
            for flip_a in [false, true] {
                for flip_b in [false, true] {
                    let mut mapped: Vec<(usize, usize)> = pairs
                        .iter()
                        .map(|&(p, q)| {
                            let (p, q) = if swap { (q, p) } else { (p, q) };
                            (if flip_a { la - 1 - p } else { p }, if flip_b { lb - 1 - q } else { q })
                        })
                        .collect();
                    mapped.sort_unstable();
                    let key = PatternKey { lengths: (la, lb), pairs: mapped };
                    if best.as_ref().is_none_or(|b| key < *b) {
                        best = Some(key);
                    }
                }
            }
        }
        best.expect("at least one candidate")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternClass {
    pub key: PatternKey,
    pub edges: Vec<(usize, usize)>,
    /// Pair susceptibility at `xi = 1` of the first member edge.
    pub chi: f64,
}

/// Groups `edges` by connection pattern, ordered by ascending `chi(1)`.
pub fn pattern_classes(
    embedding: &Embedding,
    graph: &PhysicalGraph,
    edges: &[(usize, usize)],
) -> Result<Vec<PatternClass>> {
    let conn = embedding.connections(graph);
    let mut groups: BTreeMap<PatternKey, Vec<(usize, usize)>> = BTreeMap::new();
    for &(a, b) in edges {
        if a >= embedding.len() || b >= embedding.len() || a == b {
            return Err(invalid(format!("edge ({a}, {b}) does not match the embedding")));
        }
        let pos = coupler_positions(embedding, &conn, a, b);
        if pos.is_empty() {
            return Err(invalid(format!("edge ({a}, {b}) has no connecting coupler")));
        }
        let key = PatternKey::canonical(embedding.chains[a].len(), embedding.chains[b].len(), &pos);
        groups.entry(key).or_default().push((a, b));
    }
    let mut classes = Vec::with_capacity(groups.len());
    for (key, members) in groups {
        let (a, b) = members[0];
        let da = chain_metric(graph, &embedding.chains[a])?;
        let db = chain_metric(graph, &embedding.chains[b])?;
        let chi = chi_from_positions(&da, &db, &coupler_positions(embedding, &conn, a, b), 1.0);
        classes.push(PatternClass { key, edges: members, chi });
    }
    classes.sort_by(|x, y| x.chi.total_cmp(&y.chi).then_with(|| x.key.cmp(&y.key)));
    Ok(classes)
}

/// Pattern classes of the edges an embedding was generated for.
pub fn source_pattern_classes(embedding: &Embedding, graph: &PhysicalGraph) -> Result<Vec<PatternClass>> {
    let source =
        embedding.source.as_ref().ok_or_else(|| invalid("embedding has no recorded source; pass the logical edges"))?;
    pattern_classes(embedding, graph, &source.logical_edges())
}

/// Mean `e_ab` per pattern class, in class order.
pub fn class_means(report: &EaeeReport, classes: &[PatternClass]) -> Vec<f64> {
    let column: BTreeMap<(usize, usize), usize> = report.edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    classes
        .iter()
        .map(|c| {
            let vals: Vec<f64> = c.edges.iter().filter_map(|e| column.get(e).map(|&i| report.e[i])).collect();
            vals.iter().sum::<f64>() / vals.len().max(1) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sts_values() {
        assert!((samples_to_solution(0.5, 0.99).unwrap() - 6.643856).abs() < 1e-4);
        assert_eq!(samples_to_solution(0.0, 0.99).unwrap(), f64::INFINITY);
        assert_eq!(samples_to_solution(1.0, 0.99).unwrap(), 1.0);
        assert!(samples_to_solution(1.5, 0.99).is_err());
    }

    #[test]
    fn key_symmetries() {
        let k = PatternKey::canonical(3, 5, &[(0, 4)]);
        assert_eq!(k, PatternKey::canonical(5, 3, &[(4, 0)]));
        assert_eq!(k, PatternKey::canonical(3, 5, &[(2, 0)]));
        assert_ne!(k, PatternKey::canonical(3, 5, &[(1, 0)]));
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }
}
