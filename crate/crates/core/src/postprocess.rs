//! Physical-to-logical mappings: random qubit, aligned-only, majority vote,
//! and greedy descent in the logical space.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{invalid, Error, Result};
use crate::instance::{Instance, Spin};
use crate::rng::{self, Purpose};
use crate::sampler::SampleSet;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LogicalSampleSet {
    /// Mapping tag such as `"mv"` or `"mv+gd"`.
    pub method: String,
    pub samples: Vec<Vec<Spin>>,
    pub energies: Vec<f64>,
    /// Whether every chain of the source sample was unanimous.
    pub aligned: Vec<bool>,
    /// Greedy-descent flips applied, when descent was run.
    pub gd_updates: Vec<Option<u64>>,
    /// Index of the physical sample each row came from.
    pub source: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl LogicalSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn min_energy(&self) -> Option<f64> {
        self.energies.iter().copied().min_by(f64::total_cmp)
    }

    /// CSV with columns `spins,energy,aligned,gd_updates`; spins are written
    /// as a string of `+` and `-`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let wrap = |e: csv::Error| invalid(format!("csv write failed: {e}"));
        out.write_record(["spins", "energy", "aligned", "gd_updates"]).map_err(wrap)?;
        for i in 0..self.len() {
            let spins: String = self.samples[i].iter().map(|&s| if s > 0 { '+' } else { '-' }).collect();
            let gd = self.gd_updates[i].map(|u| u.to_string()).unwrap_or_default();
            out.write_record([spins, format!("{:?}", self.energies[i]), self.aligned[i].to_string(), gd])
                .map_err(wrap)?;
        }
        out.flush().map_err(|e| invalid(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    /// Reads the CSV written by `write_csv`; method and provenance come from
    /// the sidecar and are left empty here.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut set = LogicalSampleSet::default();
        for (row, rec) in rd.records().enumerate() {
            let bad = |m: &str| Error::Schema { path: format!("row {}", row + 1), message: m.to_string() };
            let rec = rec.map_err(|e| bad(&e.to_string()))?;
            if rec.len() != 4 {
                return Err(bad("expected 4 columns"));
            }
            let spins = rec[0]
                .chars()
                .map(|c| match c {
                    '+' => Ok(1),
                    '-' => Ok(-1),
                    _ => Err(bad("spins must be + or -")),
                })
                .collect::<Result<Vec<Spin>>>()?;
            set.samples.push(spins);
            set.energies.push(rec[1].parse().map_err(|_| bad("bad energy"))?);
            set.aligned.push(rec[2].parse().map_err(|_| bad("bad aligned flag"))?);
            set.gd_updates.push(if rec[3].is_empty() {
                None
            } else {
                Some(rec[3].parse().map_err(|_| bad("bad gd_updates"))?)
            });
            set.source.push(row);
        }
        Ok(set)
    }
}

/// Sample-vector columns of each chain's qubits.
fn chain_columns(set: &SampleSet, embedding: &Embedding) -> Result<Vec<Vec<usize>>> {
    let index: std::collections::HashMap<_, _> = set.qubits.iter().enumerate().map(|(i, &q)| (q, i)).collect();
    embedding
        .chains
        .iter()
        .enumerate()
        .map(|(a, chain)| {
            let cols: Vec<usize> = chain.iter().filter_map(|q| index.get(q).copied()).collect();
            if cols.len() != chain.len() || cols.is_empty() {
                Err(invalid(format!("chain {a} is not covered by the sampled qubits")))
            } else {
                Ok(cols)
            }
        })
        .collect()
}

fn chain_values(z: &[Spin], cols: &[usize]) -> (i64, bool) {
    let sum: i64 = cols.iter().map(|&c| z[c] as i64).sum();
    (sum, sum.unsigned_abs() as usize == cols.len())
}

fn check_instance(embedding: &Embedding, instance: &Instance) -> Result<()> {
    if embedding.len() != instance.n {
        return Err(invalid(format!(
            "embedding has {} chains, instance has {} variables",
            embedding.len(),
            instance.n
        )));
    }
    Ok(())
}

fn map_with<F>(
    set: &SampleSet,
    embedding: &Embedding,
    instance: &Instance,
    method: &str,
    f: F,
) -> Result<LogicalSampleSet>
where
    F: Fn(usize, &[Spin], &[Vec<usize>]) -> Vec<Spin> + Sync,
{
    check_instance(embedding, instance)?;
    let cols = chain_columns(set, embedding)?;
    let rows: Vec<(Vec<Spin>, bool)> = set
        .samples
        .par_iter()
        .enumerate()
        .map(|(s, z)| {
            let aligned = cols.iter().all(|c| chain_values(z, c).1);
            (f(s, z, &cols), aligned)
        })
        .collect();
    let mut out =
        LogicalSampleSet { method: method.to_string(), provenance: set.provenance.clone(), ..Default::default() };
    for (s, (x, aligned)) in rows.into_iter().enumerate() {
        out.energies.push(instance.energy_unchecked(&x));
        out.samples.push(x);
        out.aligned.push(aligned);
        out.gd_updates.push(None);
        out.source.push(s);
    }
    Ok(out)
}

/// `x_a` is the spin of one uniformly chosen qubit of chain `a`. Sample `s`
/// draws from stream `s` of `seed`.
pub fn map_random(set: &SampleSet, embedding: &Embedding, instance: &Instance, seed: u64) -> Result<LogicalSampleSet> {
    map_with(set, embedding, instance, "r", |s, z, cols| {
        let mut r = rng::stream(seed, Purpose::MapRandom, s as u64);
        cols.iter().map(|c| z[c[r.random_range(0..c.len())]]).collect()
    })
}

/// `x_a = sign(sum of chain spins)`, ties broken by a uniform draw.
pub fn map_majority(
    set: &SampleSet,
    embedding: &Embedding,
    instance: &Instance,
    seed: u64,
) -> Result<LogicalSampleSet> {
    map_with(set, embedding, instance, "mv", |s, z, cols| {
        let mut r = rng::stream(seed, Purpose::MapMajority, s as u64);
        cols.iter()
            .map(|c| match chain_values(z, c).0.signum() {
                0 => rng::spin(&mut r),
                v => v as Spin,
            })
            .collect()
    })
}

/// Keeps only samples whose every chain is unanimous.
pub fn filter_aligned(set: &SampleSet, embedding: &Embedding, instance: &Instance) -> Result<LogicalSampleSet> {
    let all = map_with(set, embedding, instance, "a", |_, z, cols| cols.iter().map(|c| z[c[0]]).collect())?;
    let keep: Vec<usize> = (0..all.len()).filter(|&i| all.aligned[i]).collect();
    Ok(LogicalSampleSet {
        method: all.method,
        samples: keep.iter().map(|&i| all.samples[i].clone()).collect(),
        energies: keep.iter().map(|&i| all.energies[i]).collect(),
        aligned: vec![true; keep.len()],
        gd_updates: vec![None; keep.len()],
        source: keep.iter().map(|&i| all.source[i]).collect(),
        provenance: all.provenance,
    })
}

/// Seed-derived variable order shared by every sample of one set.
pub fn descent_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Purpose::DescentOrder, 0));
    order
}

/// Runs single-flip descent on one state in place; returns the flip count.
/// Visiting `order` repeatedly, `x_a <- -sign(local field)`, where a zero
/// field leaves `x_a` unchanged. Stops after a pass with no flips.
pub fn descend(x: &mut [Spin], neighbors: &[Vec<(usize, f64)>], h: &[f64], order: &[usize]) -> u64 {
    let mut updates = 0;
    loop {
        let mut changed = false;
        for &a in order {
            let field = h[a] + neighbors[a].iter().map(|&(b, v)| v * x[b] as f64).sum::<f64>();
            let target = if field > 0.0 {
                -1
            } else if field < 0.0 {
                1
            } else {
                x[a]
            };
            if target != x[a] {
                x[a] = target;
                updates += 1;
                changed = true;
            }
        }
        if !changed {
            return updates;
        }
    }
}

pub fn greedy_descent(logical: &LogicalSampleSet, instance: &Instance, order_seed: u64) -> Result<LogicalSampleSet> {
    if logical.samples.iter().any(|x| x.len() != instance.n) {
        return Err(invalid("logical samples do not match the instance size"));
    }
    let neighbors = instance.neighbors();
    let order = descent_order(instance.n, order_seed);
    let results: Vec<(Vec<Spin>, u64)> = logical
        .samples
        .par_iter()
        .map(|x| {
            let mut y = x.clone();
            let u = descend(&mut y, &neighbors, &instance.h, &order);
            (y, u)
        })
        .collect();
    let mut out = logical.clone();
    out.method = format!("{}+gd", logical.method);
    for (i, (y, u)) in results.into_iter().enumerate() {
        out.energies[i] = instance.energy_unchecked(&y);
        out.samples[i] = y;
        out.gd_updates[i] = Some(u);
    }
    Ok(out)
}

/// Uniform random logical states, the starting point of the rand+GD baseline.
pub fn random_logical(instance: &Instance, count: usize, seed: u64) -> LogicalSampleSet {
    let samples: Vec<Vec<Spin>> = (0..count)
        .map(|s| {
            let mut r = rng::stream(seed, Purpose::RandomStates, s as u64);
            (0..instance.n).map(|_| rng::spin(&mut r)).collect()
        })
        .collect();
    LogicalSampleSet {
        method: "rand".into(),
        energies: samples.iter().map(|x| instance.energy_unchecked(x)).collect(),
        aligned: vec![false; count],
        gd_updates: vec![None; count],
        source: (0..count).collect(),
        samples,
        provenance: None,
    }
}

/// Whether any single flip lowers the energy.
pub fn is_local_minimum(x: &[Spin], instance: &Instance) -> bool {
    let neighbors = instance.neighbors();
    (0..instance.n).all(|a| {
        let field = instance.h[a] + neighbors[a].iter().map(|&(b, v)| v * x[b] as f64).sum::<f64>();
        x[a] as f64 * field <= 0.0
    })
}
