//! Physical samplers: a local Monte Carlo backend and a remote client.
//!
//! Anneal mode runs each read as an independent Metropolis chain from a
//! uniform random start over a geometric inverse-temperature schedule and
//! keeps the final state. Read `r` uses stream `r` of the seed.
//!
//! Equilibrium mode runs heat-bath chains at fixed `beta`. Each chain of
//! `sweeps` sweeps discards the first `floor(burn_in * sweeps)` and then
//! emits one sample after every remaining sweep; reads are filled chain by
//! chain, and chain `c` uses stream `c` of the seed.

pub mod remote;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compile::PhysicalProblem;
use crate::error::{invalid, Result};
use crate::instance::Spin;
use crate::rng::{self, Purpose, StreamRng};
use crate::topology::Qubit;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Schedule {
    Anneal { beta_start: f64, beta_end: f64 },
    Equilibrium { beta: f64, burn_in: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Anneal { beta_start: 0.1, beta_end: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub num_reads: usize,
    pub sweeps: usize,
    #[serde(flatten)]
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        SamplerParams { num_reads: 100, sweeps: 1000, schedule: Schedule::default(), seed: 0 }
    }
}

pub const DEFAULT_BURN_IN: f64 = 0.5;

impl SamplerParams {
    pub fn anneal(num_reads: usize, sweeps: usize, seed: u64) -> Self {
        SamplerParams { num_reads, sweeps, schedule: Schedule::default(), seed }
    }

    pub fn equilibrium(num_reads: usize, sweeps: usize, beta: f64, seed: u64) -> Self {
        SamplerParams { num_reads, sweeps, schedule: Schedule::Equilibrium { beta, burn_in: DEFAULT_BURN_IN }, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_reads == 0 || self.sweeps == 0 {
            return Err(invalid("num_reads and sweeps must be positive"));
        }
        match self.schedule {
            Schedule::Anneal { beta_start, beta_end } => {
                if !(beta_start > 0.0 && beta_end >= beta_start && beta_end.is_finite()) {
                    return Err(invalid("anneal schedule needs 0 < beta_start <= beta_end"));
                }
            }
            Schedule::Equilibrium { beta, burn_in } => {
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(invalid("equilibrium beta must be positive"));
                }
                if !(0.0..1.0).contains(&burn_in) {
                    return Err(invalid("burn-in fraction must be in [0, 1)"));
                }
            }
        }
        Ok(())
    }

    /// Inverse temperature of each anneal sweep.
    pub fn betas(&self) -> Vec<f64> {
        match self.schedule {
            Schedule::Anneal { beta_start, beta_end } => {
                if self.sweeps == 1 {
                    return vec![beta_end];
                }
                let ratio = beta_end / beta_start;
                (0..self.sweeps).map(|k| beta_start * ratio.powf(k as f64 / (self.sweeps - 1) as f64)).collect()
            }
            Schedule::Equilibrium { beta, .. } => vec![beta; self.sweeps],
        }
    }

    /// `(discarded sweeps, samples per chain)` in equilibrium mode.
    pub fn equilibrium_layout(&self) -> (usize, usize) {
        let burn_in = match self.schedule {
            Schedule::Equilibrium { burn_in, .. } => burn_in,
            Schedule::Anneal { .. } => 0.0,
        };
        let discard = ((burn_in * self.sweeps as f64).floor() as usize).min(self.sweeps - 1);
        (discard, self.sweeps - discard)
    }

    /// RNG stream used for each read.
    pub fn streams(&self) -> Vec<u64> {
        match self.schedule {
            Schedule::Anneal { .. } => (0..self.num_reads as u64).collect(),
            Schedule::Equilibrium { .. } => {
                let per = self.equilibrium_layout().1;
                (0..self.num_reads).map(|r| (r / per) as u64).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    /// Qubit of each sample-vector position.
    pub qubits: Vec<Qubit>,
    pub samples: Vec<Vec<Spin>>,
    pub energies: Vec<f64>,
    pub params: SamplerParams,
    pub streams: Vec<u64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn min_energy(&self) -> Option<f64> {
        self.energies.iter().copied().min_by(f64::total_cmp)
    }
}

pub trait Sampler: Sync {
    fn sample(&self, problem: &PhysicalProblem, params: &SamplerParams) -> Result<SampleSet>;
}

/// Compact problem form used by the Monte Carlo kernels.
#[derive(Clone, Debug)]
pub struct IsingModel {
    pub h: Vec<f64>,
    offsets: Vec<usize>,
    neighbors: Vec<(u32, f64)>,
}

impl IsingModel {
    pub fn from_problem(problem: &PhysicalProblem) -> Result<Self> {
        let idx = problem.index_of();
        let n = problem.num_qubits();
        let mut lists: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(a, b, v) in &problem.j {
            let (Some(&i), Some(&k)) = (idx.get(&a), idx.get(&b)) else {
                return Err(invalid(format!("coupler ({a}, {b}) touches a qubit without a field entry")));
            };
            lists[i].push((k as u32, v));
            lists[k].push((i as u32, v));
        }
        Ok(Self::from_lists(problem.h.iter().map(|&(_, v)| v).collect(), lists))
    }

    pub fn from_lists(h: Vec<f64>, lists: Vec<Vec<(u32, f64)>>) -> Self {
        let mut offsets = Vec::with_capacity(h.len() + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for l in lists {
            neighbors.extend(l);
            offsets.push(neighbors.len());
        }
        IsingModel { h, offsets, neighbors }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    #[inline]
    pub fn local_field(&self, z: &[Spin], i: usize) -> f64 {
        let mut f = self.h[i];
        for &(k, v) in &self.neighbors[self.offsets[i]..self.offsets[i + 1]] {
            f += v * z[k as usize] as f64;
        }
        f
    }

    pub fn energy(&self, z: &[Spin]) -> f64 {
        let mut e = 0.0;
        for i in 0..self.len() {
            let zi = z[i] as f64;
            e += self.h[i] * zi;
            for &(k, v) in &self.neighbors[self.offsets[i]..self.offsets[i + 1]] {
                if (k as usize) > i {
                    e += v * zi * z[k as usize] as f64;
                }
            }
        }
        e
    }
}

/// One Markov chain with incrementally tracked energy.
pub struct MarkovChain<'a> {
    model: &'a IsingModel,
    spins: Vec<Spin>,
    energy: f64,
    rng: StreamRng,
}

impl<'a> MarkovChain<'a> {
    /// Uniform random start drawn from `rng`.
    pub fn new(model: &'a IsingModel, mut rng: StreamRng) -> Self {
        let spins: Vec<Spin> = (0..model.len()).map(|_| rng::spin(&mut rng)).collect();
        let energy = model.energy(&spins);
        MarkovChain { model, spins, energy, rng }
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Full recomputation, for checking the tracked value.
    pub fn recompute_energy(&self) -> f64 {
        self.model.energy(&self.spins)
    }

    /// Sequential Metropolis sweep: flip when `dE <= 0` or `u < exp(-beta dE)`.
    pub fn metropolis_sweep(&mut self, beta: f64) {
        for i in 0..self.model.len() {
            let f = self.model.local_field(&self.spins, i);
            let de = -2.0 * self.spins[i] as f64 * f;
            if de <= 0.0 || rng::unit(&mut self.rng) < (-beta * de).exp() {
                self.spins[i] = -self.spins[i];
                self.energy += de;
            }
        }
    }

    /// Sequential heat-bath sweep: `P(z_i = +1) = 1 / (1 + exp(2 beta f_i))`.
    pub fn gibbs_sweep(&mut self, beta: f64) {
        for i in 0..self.model.len() {
            let f = self.model.local_field(&self.spins, i);
            let up = 1.0 / (1.0 + (2.0 * beta * f).exp());
            let s: Spin = if rng::unit(&mut self.rng) < up { 1 } else { -1 };
            if s != self.spins[i] {
                self.energy += -2.0 * self.spins[i] as f64 * f;
                self.spins[i] = s;
            }
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

pub struct LocalSampler;

impl LocalSampler {
    fn anneal(model: &IsingModel, params: &SamplerParams) -> Vec<(Vec<Spin>, f64)> {
        let betas = params.betas();
        (0..params.num_reads)
            .into_par_iter()
            .map(|r| {
                let mut chain = MarkovChain::new(model, rng::stream(params.seed, Purpose::Anneal, r as u64));
                for &b in &betas {
                    chain.metropolis_sweep(b);
                }
                (chain.spins.clone(), chain.recompute_energy())
            })
            .collect()
    }

    fn equilibrium(model: &IsingModel, params: &SamplerParams, beta: f64) -> Vec<(Vec<Spin>, f64)> {
        let (discard, per) = params.equilibrium_layout();
        let chains = params.num_reads.div_ceil(per);
        let mut out: Vec<(Vec<Spin>, f64)> = (0..chains)
            .into_par_iter()
            .flat_map_iter(|c| {
                let take = per.min(params.num_reads - c * per);
                let mut chain = MarkovChain::new(model, rng::stream(params.seed, Purpose::Equilibrium, c as u64));
                for _ in 0..discard {
                    chain.gibbs_sweep(beta);
                }
                let mut rows = Vec::with_capacity(take);
                for _ in 0..take {
                    chain.gibbs_sweep(beta);
                    rows.push((chain.spins.clone(), chain.recompute_energy()));
                }
                rows
            })
            .collect();
        out.truncate(params.num_reads);
        out
    }
}

impl Sampler for LocalSampler {
    fn sample(&self, problem: &PhysicalProblem, params: &SamplerParams) -> Result<SampleSet> {
        params.validate()?;
        if problem.h.is_empty() {
            return Err(invalid("problem has no qubits"));
        }
        let model = IsingModel::from_problem(problem)?;
        let rows = match params.schedule {
            Schedule::Anneal { .. } => Self::anneal(&model, params),
            Schedule::Equilibrium { beta, .. } => Self::equilibrium(&model, params, beta),
        };
        let (samples, energies) = rows.into_iter().unzip();
        Ok(SampleSet {
            provenance: Some(crate::formats::content_id(problem)),
            qubits: problem.qubits(),
            samples,
            energies,
            params: params.clone(),
            streams: params.streams(),
        })
    }
}

/// Convenience wrapper around the local backend.
pub fn sample(problem: &PhysicalProblem, params: &SamplerParams) -> Result<SampleSet> {
    LocalSampler.sample(problem, params)
}
