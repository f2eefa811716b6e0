//! Experiment runner.
//!
//! A run generates an ensemble, embeds it once, and then for every sweep
//! cell (the cross product of the configured axes) compiles, samples, maps
//! and scores each instance. Instance `i` of cell `k` samples with the seed
//! derived from `(sampler.seed, k, i)`, so a cell's results do not depend on
//! which other cells run or in which order.
//!
//! Success is judged against each instance's target energy: the recorded
//! `target_energy`, else the exhaustive minimum when `n` is small enough,
//! else the lowest energy seen by any method in any cell of the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compile::{chain_strength, compensate, rescale, CompensationConfig, Method, PhysicalProblem, Xi};
use crate::embedding::{embed_biclique, embed_clique_with, embed_cubic, validate, CliqueLayout, Embedding};
use crate::error::{invalid, Error, Result};
use crate::formats::{content_id, read_json, write_atomic, write_document, write_json};
use crate::instance::{gen_3dsg, gen_bsg, gen_cdma, gen_csg, Instance, ProblemKind};
use crate::metrics::{
    bootstrap_variance, bootstrap_variance_blocks, class_means, eaee, quantile, source_pattern_classes, success_rate,
    time_to_solution, TimingModel, DEFAULT_CONFIDENCE,
};
use crate::postprocess::{filter_aligned, greedy_descent, map_majority, map_random, random_logical, LogicalSampleSet};
use crate::reference::{brute_min, BRUTE_FORCE_CAP};
use crate::rng::{derive_seed, Purpose};
use crate::sampler::remote::RemoteSampler;
use crate::sampler::{LocalSampler, SampleSet, Sampler, SamplerParams, Schedule};
use crate::spectral::pattern_id;
use crate::topology::{build_chimera, GraphSpec, PhysicalGraph};

fn default_load() -> f64 {
    1.4
}

fn default_snr() -> f64 {
    7.0
}

fn default_one() -> f64 {
    1.0
}

fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE
}

fn default_bootstrap() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: ProblemKind,
    /// Variable count; implied by `dims` for cubic lattices.
    #[serde(default)]
    pub n: usize,
    pub count: usize,
    /// Instance `i` is generated with seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 3]>,
    #[serde(default = "default_load")]
    pub load: f64,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
}

impl EnsembleSpec {
    pub fn new(kind: ProblemKind, n: usize, count: usize, seed: u64) -> Self {
        EnsembleSpec { kind, n, count, seed, dims: None, load: default_load(), snr_db: default_snr() }
    }

    pub fn instance_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }

    fn lattice(&self) -> Result<[usize; 3]> {
        self.dims.ok_or_else(|| invalid("cubic ensembles need dims"))
    }

    pub fn variables(&self) -> usize {
        match (self.kind, self.dims) {
            (ProblemKind::Cubic, Some(d)) => d.iter().product(),
            _ => self.n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(invalid("ensemble count must be positive"));
        }
        match self.kind {
            ProblemKind::Cubic => {
                let d = self.lattice()?;
                if d.contains(&0) {
                    return Err(invalid("lattice dimensions must be positive"));
                }
                if self.n != 0 && self.n != self.variables() {
                    return Err(invalid(format!("n = {} disagrees with dims {d:?}", self.n)));
                }
            }
            _ if self.n < 2 => return Err(invalid("ensembles need n >= 2")),
            _ => {}
        }
        Ok(())
    }

    pub fn generate(&self, i: usize) -> Result<Instance> {
        let seed = self.instance_seed(i);
        match self.kind {
            ProblemKind::Clique => gen_csg(self.n, seed),
            ProblemKind::Biclique => gen_bsg(self.n, seed),
            ProblemKind::Cubic => gen_3dsg(self.lattice()?, seed, None),
            ProblemKind::Cdma => gen_cdma(self.n, self.load, self.snr_db, seed),
        }
    }

    /// Smallest ideal Chimera size holding the native embedding.
    pub fn min_graph_size(&self) -> Result<usize> {
        let m = match self.kind {
            ProblemKind::Clique | ProblemKind::Cdma => self.n.div_ceil(4),
            ProblemKind::Biclique => (self.n / 2).div_ceil(4),
            ProblemKind::Cubic => {
                let [x, y, _] = self.lattice()?;
                2 * x.max(y)
            }
        };
        Ok(m.max(1))
    }

    /// Native embedding: cliques (and the dense CDMA couplings) use the
    /// clique layout, bicliques and lattices their dedicated embedders.
    pub fn embed(&self, graph: &PhysicalGraph, layout: CliqueLayout) -> Result<Embedding> {
        match self.kind {
            ProblemKind::Clique | ProblemKind::Cdma => embed_clique_with(self.n, graph, layout),
            ProblemKind::Biclique => embed_biclique(self.n, graph),
            ProblemKind::Cubic => embed_cubic(self.lattice()?, graph),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    /// Hardware graph; the smallest ideal graph that fits when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    #[serde(default)]
    pub layout: CliqueLayout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompileSpec {
    #[serde(default = "default_one")]
    pub lambda0: f64,
    /// Explicit chain strength; overrides `lambda0` and its sweep axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub compensation: CompensationConfig,
}

impl Default for CompileSpec {
    fn default() -> Self {
        CompileSpec { lambda0: 1.0, lambda: None, compensation: CompensationConfig::default() }
    }
}

/// Embedding file contents: the chains plus the graph they live on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub graph: GraphSpec,
    #[serde(flatten)]
    pub embedding: Embedding,
}

/// Physical-to-logical mapping applied to every sample set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mapping {
    #[serde(rename = "r")]
    Random,
    #[serde(rename = "a")]
    Aligned,
    #[serde(rename = "mv")]
    Majority,
    #[serde(rename = "r+gd")]
    RandomDescent,
    #[serde(rename = "mv+gd")]
    MajorityDescent,
    /// Descent from uniform random states; ignores the physical samples.
    #[serde(rename = "rand+gd")]
    RandomStatesDescent,
}

impl Mapping {
    pub const ALL: [Mapping; 6] = [
        Mapping::Random,
        Mapping::Aligned,
        Mapping::Majority,
        Mapping::RandomDescent,
        Mapping::MajorityDescent,
        Mapping::RandomStatesDescent,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Mapping::Random => "r",
            Mapping::Aligned => "a",
            Mapping::Majority => "mv",
            Mapping::RandomDescent => "r+gd",
            Mapping::MajorityDescent => "mv+gd",
            Mapping::RandomStatesDescent => "rand+gd",
        }
    }
}

impl std::fmt::Display for Mapping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Mapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Mapping::ALL
            .into_iter()
            .find(|m| m.tag() == t)
            .ok_or_else(|| invalid(format!("unknown mapping {s:?} (r, a, mv, r+gd, mv+gd, rand+gd)")))
    }
}

/// Maps one physical sample set. `seed` drives tie breaks, random qubit
/// choice, the descent order and the random starts of `rand+gd`.
pub fn apply_mapping(
    mapping: Mapping,
    set: &SampleSet,
    embedding: &Embedding,
    instance: &Instance,
    seed: u64,
) -> Result<LogicalSampleSet> {
    match mapping {
        Mapping::Random => map_random(set, embedding, instance, seed),
        Mapping::Aligned => filter_aligned(set, embedding, instance),
        Mapping::Majority => map_majority(set, embedding, instance, seed),
        Mapping::RandomDescent => greedy_descent(&map_random(set, embedding, instance, seed)?, instance, seed),
        Mapping::MajorityDescent => greedy_descent(&map_majority(set, embedding, instance, seed)?, instance, seed),
        Mapping::RandomStatesDescent => {
            let mut start = random_logical(instance, set.len(), seed);
            start.provenance = set.provenance.clone();
            greedy_descent(&start, instance, seed)
        }
    }
}

fn default_methods() -> Vec<Mapping> {
    vec![Mapping::Majority]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingSpec {
    #[serde(default = "default_methods")]
    pub methods: Vec<Mapping>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for MappingSpec {
    fn default() -> Self {
        MappingSpec { methods: default_methods(), seed: 0 }
    }
}

/// Sweep axes. An empty axis contributes the single base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda0: Vec<f64>,
    /// Each entry switches the cell to susceptibility compensation at that
    /// decay length.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub xi: Vec<Xi>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t_a: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<f64>,
}

/// How sampler inverse temperatures are expressed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaUnits {
    /// Against programmed (rescaled) energies.
    #[default]
    Physical,
    /// Against the chain coupling: the sampler runs at `beta / (R lambda)`,
    /// so `beta` is the `beta lambda` a chain experiences.
    Chain,
}

/// One point of the sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub lambda0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Xi>,
    pub t_a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub embedding: EmbeddingSpec,
    #[serde(default)]
    pub compile: CompileSpec,
    #[serde(default)]
    pub sampler: SamplerParams,
    /// Remote sampler base URL; the local backend when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub mapping: MappingSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub beta_units: BetaUnits,
    /// Converts anneal time to sweeps (`round(t_a * rate)`) when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps_per_us: Option<f64>,
    #[serde(default)]
    pub timing: TimingModel,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Resamples for the edge-energy variance interval.
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// Thread budget for cells and instances; rayon's default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Also persist physical and logical samples per instance.
    #[serde(default)]
    pub save_samples: bool,
}

impl ExperimentConfig {
    pub fn new(name: &str, ensemble: EnsembleSpec) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            ensemble,
            embedding: EmbeddingSpec::default(),
            compile: CompileSpec::default(),
            sampler: SamplerParams::default(),
            endpoint: None,
            mapping: MappingSpec::default(),
            sweep: SweepSpec::default(),
            beta_units: BetaUnits::Physical,
            sweeps_per_us: None,
            timing: TimingModel::default(),
            confidence: DEFAULT_CONFIDENCE,
            bootstrap: default_bootstrap(),
            workers: None,
            output_dir: None,
            save_samples: false,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let config: ExperimentConfig = read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        self.sampler.validate()?;
        self.timing.validate()?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.compile.lambda0) || !self.sweep.lambda0.iter().all(|&v| positive(v)) {
            return Err(invalid("lambda0 values must be positive"));
        }
        if self.compile.lambda.is_some_and(|v| !positive(v)) {
            return Err(invalid("explicit lambda must be positive"));
        }
        if self.compile.compensation.method == Method::Spectral && !positive(self.compile.compensation.gamma) {
            return Err(invalid("spectral compensation needs gamma > 0"));
        }
        if !self.sweep.t_a.iter().all(|&v| v >= 0.0 && v.is_finite()) {
            return Err(invalid("t_a values must be finite and non-negative"));
        }
        if !self.sweep.beta.iter().all(|&v| positive(v)) {
            return Err(invalid("beta values must be positive"));
        }
        if self.sweeps_per_us.is_some_and(|v| !positive(v)) {
            return Err(invalid("sweeps_per_us must be positive"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid("confidence must lie in (0, 1)"));
        }
        if self.mapping.methods.is_empty() {
            return Err(invalid("at least one mapping method is required"));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers must be positive"));
        }
        Ok(())
    }

    /// Cross product of the sweep axes, `lambda0` outermost, `beta` innermost.
    pub fn cells(&self) -> Vec<Cell> {
        fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let lambda0 = axis(&self.sweep.lambda0, self.compile.lambda0);
        let xi = axis(&self.sweep.xi.iter().map(|&x| Some(x)).collect::<Vec<_>>(), None);
        let t_a = axis(&self.sweep.t_a, self.timing.t_a);
        let beta = axis(&self.sweep.beta.iter().map(|&b| Some(b)).collect::<Vec<_>>(), None);
        let mut cells = Vec::new();
        for &l in &lambda0 {
            for &x in &xi {
                for &t in &t_a {
                    for &b in &beta {
                        cells.push(Cell { index: cells.len(), lambda0: l, xi: x, t_a: t, beta: b });
                    }
                }
            }
        }
        cells
    }

    pub fn graph(&self) -> Result<PhysicalGraph> {
        match &self.embedding.graph {
            Some(spec) => PhysicalGraph::from_spec(spec),
            None => build_chimera(self.ensemble.min_graph_size()?, &[], &[]),
        }
    }

    pub fn compensation(&self, cell: &Cell) -> CompensationConfig {
        match cell.xi {
            Some(xi) => {
                CompensationConfig { method: Method::Susceptibility, xi, gamma: self.compile.compensation.gamma }
            }
            None => self.compile.compensation,
        }
    }

    /// Sampler parameters for instance `i` of `cell` on `problem`.
    pub fn sampler_params(&self, cell: &Cell, i: usize, problem: &PhysicalProblem) -> SamplerParams {
        let mut p = self.sampler.clone();
        p.seed = cell_seed(self.sampler.seed, cell.index, i);
        if let Some(rate) = self.sweeps_per_us {
            p.sweeps = ((cell.t_a * rate).round() as usize).max(1);
        }
        let scale = match self.beta_units {
            BetaUnits::Physical => 1.0,
            BetaUnits::Chain => 1.0 / (problem.rescale * problem.lambda),
        };
        match &mut p.schedule {
            Schedule::Equilibrium { beta, .. } => *beta = cell.beta.unwrap_or(*beta) * scale,
            Schedule::Anneal { beta_start, beta_end } => {
                *beta_end = cell.beta.unwrap_or(*beta_end) * scale;
                *beta_start *= scale;
            }
        }
        p
    }

    pub fn timing_for(&self, cell: &Cell) -> TimingModel {
        TimingModel { t_a: cell.t_a, ..self.timing }
    }
}

/// Seed of instance `i` in cell `cell`, derived from a base seed.
pub fn cell_seed(base: u64, cell: usize, i: usize) -> u64 {
    derive_seed(derive_seed(base, Purpose::Cell, cell as u64), Purpose::Cell, i as u64)
}

/// Built-in experiment presets.
pub const PRESETS: [&str; 2] = ["chain-strength-sweep", "eaee-xi-sweep"];

/// `tanh(x)^5 = 1/2`: the chain-unit inverse temperature at which
/// correlations decay by half along a five-qubit chain.
pub const HALF_DECAY_BETA_L5: f64 = 1.335_7;

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "chain-strength-sweep" => {
            let mut c = ExperimentConfig::new(name, EnsembleSpec::new(ProblemKind::Clique, 16, 20, 1));
            c.sampler = SamplerParams {
                num_reads: 100,
                sweeps: 100,
                schedule: Schedule::Anneal { beta_start: 0.1, beta_end: 3.0 },
                seed: 1,
            };
            c.mapping.methods = vec![Mapping::Majority];
            c.sweep.lambda0 = vec![0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0];
            Ok(c)
        }
        "eaee-xi-sweep" => {
            let mut c = ExperimentConfig::new(name, EnsembleSpec::new(ProblemKind::Clique, 16, 50, 1));
            // 50 chains of 200 retained sweeps after 200 burn-in sweeps.
            c.sampler = SamplerParams::equilibrium(10_000, 400, HALF_DECAY_BETA_L5, 1);
            c.beta_units = BetaUnits::Chain;
            c.mapping.methods = vec![Mapping::Majority];
            c.sweep.xi = vec![
                Xi::Infinite,
                Xi::from_inverse(0.1),
                Xi::ChainLength,
                Xi::from_inverse(0.35),
                Xi::from_inverse(0.5),
                Xi::from_inverse(0.75),
                Xi::from_inverse(1.0),
            ];
            Ok(c)
        }
        other => Err(invalid(format!("unknown preset {other:?} (known: {})", PRESETS.join(", ")))),
    }
}

/// Median, mean and quartiles over instances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub median: f64,
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Stat {
            median: quantile(&v, 0.5),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            q25: quantile(&v, 0.25),
            q75: quantile(&v, 0.75),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub instance: usize,
    pub target: f64,
    /// Logical samples after mapping (fewer than the reads for `a`).
    pub samples: usize,
    /// Fraction of all reads reaching the target.
    pub success: f64,
    pub samples_to_solution: f64,
    pub mean_energy: f64,
    pub min_energy: f64,
    /// Fraction of physical reads with every chain unanimous.
    pub aligned_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gd_updates: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub success: Stat,
    pub samples_to_solution: Stat,
    pub tts_anneal_us: Stat,
    pub tts_access_us: Stat,
    pub mean_energy: Stat,
    pub min_energy: Stat,
    pub aligned_fraction: Stat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gd_updates: Option<Stat>,
    pub per_instance: Vec<InstanceMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMean {
    pub pattern: String,
    pub edges: usize,
    /// Pair susceptibility at `xi = 1`, the class order key.
    pub chi: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EaeeSummary {
    pub method: String,
    pub mean: f64,
    pub variance: f64,
    /// Bootstrap 95% percentile interval of the variance from resampling
    /// instances.
    pub interval: (f64, f64),
    /// The same from resampling sampler output (chains, or reads when
    /// independent) with the instances fixed.
    pub sampling_interval: (f64, f64),
    pub edges: Vec<(usize, usize)>,
    pub e: Vec<f64>,
    pub classes: Vec<ClassMean>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: Cell,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Stat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescale: Option<Stat>,
    #[serde(default)]
    pub methods: Vec<MethodSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eaee: Option<EaeeSummary>,
}

impl CellReport {
    fn failed(cell: Cell, error: &Error) -> Self {
        CellReport {
            cell,
            error: Some(error.to_string()),
            lambda: None,
            rescale: None,
            methods: Vec::new(),
            eaee: None,
        }
    }

    pub fn method(&self, tag: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == tag)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub config_id: String,
    pub instances: usize,
    pub targets: Vec<f64>,
    pub cells: Vec<CellReport>,
}

pub const REPORT_COLUMNS: [&str; 28] = [
    "cell",
    "lambda0",
    "xi",
    "t_a_us",
    "beta",
    "method",
    "success_median",
    "success_mean",
    "success_q25",
    "success_q75",
    "sts_median",
    "tts_anneal_us_median",
    "tts_access_us_median",
    "mean_energy_median",
    "mean_energy_mean",
    "mean_energy_q25",
    "mean_energy_q75",
    "min_energy_median",
    "aligned_fraction_median",
    "gd_updates_median",
    "lambda_median",
    "rescale_median",
    "eaee_variance",
    "eaee_variance_lo",
    "eaee_variance_hi",
    "eaee_sampling_lo",
    "eaee_sampling_hi",
    "error",
];

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl RunReport {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    /// One row per cell and method; failed cells get a single row carrying
    /// the error.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| invalid(format!("csv write failed: {e}"));
        w.write_record(REPORT_COLUMNS).map_err(wrap)?;
        for c in &self.cells {
            let head = [
                c.cell.index.to_string(),
                num(c.cell.lambda0),
                c.cell.xi.map(|x| x.to_string()).unwrap_or_default(),
                num(c.cell.t_a),
                opt(c.cell.beta),
            ];
            let eaee = c.eaee.as_ref();
            let tail = [
                opt(c.lambda.map(|s| s.median)),
                opt(c.rescale.map(|s| s.median)),
                opt(eaee.map(|e| e.variance)),
                opt(eaee.map(|e| e.interval.0)),
                opt(eaee.map(|e| e.interval.1)),
                opt(eaee.map(|e| e.sampling_interval.0)),
                opt(eaee.map(|e| e.sampling_interval.1)),
                c.error.clone().unwrap_or_default(),
            ];
            if c.methods.is_empty() {
                let mut row: Vec<String> = head.to_vec();
                row.extend(std::iter::repeat_n(String::new(), REPORT_COLUMNS.len() - head.len() - tail.len()));
                row.extend(tail.iter().cloned());
                w.write_record(&row).map_err(wrap)?;
            }
            for m in &c.methods {
                let mut row: Vec<String> = head.to_vec();
                row.push(m.method.clone());
                row.extend(
                    [
                        m.success.median,
                        m.success.mean,
                        m.success.q25,
                        m.success.q75,
                        m.samples_to_solution.median,
                        m.tts_anneal_us.median,
                        m.tts_access_us.median,
                        m.mean_energy.median,
                        m.mean_energy.mean,
                        m.mean_energy.q25,
                        m.mean_energy.q75,
                        m.min_energy.median,
                        m.aligned_fraction.median,
                    ]
                    .map(num),
                );
                row.push(opt(m.gd_updates.map(|s| s.median)));
                row.extend(tail.iter().cloned());
                w.write_record(&row).map_err(wrap)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| invalid(format!("csv write failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Per-edge energies of every cell with an edge-energy summary.
    pub fn eaee_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| invalid(format!("csv write failed: {e}"));
        w.write_record(["cell", "xi", "a", "b", "e_ab"]).map_err(wrap)?;
        for c in &self.cells {
            let Some(e) = &c.eaee else { continue };
            let xi = c.cell.xi.map(|x| x.to_string()).unwrap_or_default();
            for (&(a, b), v) in e.edges.iter().zip(&e.e) {
                w.write_record([c.cell.index.to_string(), xi.clone(), a.to_string(), b.to_string(), num(*v)])
                    .map_err(wrap)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| invalid(format!("csv write failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Everything phase one produces for one cell.
struct CellSamples {
    reads: Vec<usize>,
    lambdas: Vec<f64>,
    rescales: Vec<f64>,
    aligned: Vec<f64>,
    /// `[instance][method]`.
    logical: Vec<Vec<LogicalSampleSet>>,
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    instances: &'a [Instance],
    instance_ids: &'a [String],
    embedding: &'a Embedding,
    embedding_id: &'a str,
    graph: &'a PhysicalGraph,
    sampler: &'a dyn Sampler,
    out: Option<&'a Path>,
}

fn cell_dir(out: &Path, cell: usize) -> PathBuf {
    out.join("cells").join(format!("{cell:03}"))
}

impl Context<'_> {
    /// `(reads, lambda, R, aligned fraction, logical sets)` of one instance.
    fn run_instance(&self, cell: &Cell, i: usize) -> Result<(usize, f64, f64, f64, Vec<LogicalSampleSet>)> {
        let config = self.config;
        let instance = &self.instances[i];
        let lambda = match config.compile.lambda {
            Some(l) => l,
            None => chain_strength(instance, cell.lambda0)?,
        };
        let mut problem =
            rescale(&compensate(instance, self.embedding, self.graph, lambda, &config.compensation(cell))?)?;
        problem.provenance.instance = Some(self.instance_ids[i].clone());
        problem.provenance.embedding = Some(self.embedding_id.to_string());
        let params = config.sampler_params(cell, i, &problem);
        let set = self.sampler.sample(&problem, &params)?;
        let map_seed = cell_seed(config.mapping.seed, cell.index, i);
        let logical = config
            .mapping
            .methods
            .iter()
            .map(|&m| apply_mapping(m, &set, self.embedding, instance, map_seed))
            .collect::<Result<Vec<_>>>()?;
        let aligned = filter_aligned(&set, self.embedding, instance)?.len() as f64 / set.len() as f64;

        if let Some(out) = self.out {
            let dir = cell_dir(out, cell.index);
            let parents = BTreeMap::from([
                ("instance".to_string(), self.instance_ids[i].clone()),
                ("embedding".to_string(), self.embedding_id.to_string()),
            ]);
            let problem_id = write_document(&dir.join(format!("problem_{i:04}.json")), "problem", &problem, parents)?;
            if config.save_samples {
                let parents = BTreeMap::from([("problem".to_string(), problem_id)]);
                write_document(&dir.join(format!("samples_{i:04}.json")), "samples", &set, parents)?;
                for l in &logical {
                    let mut bytes = Vec::new();
                    l.write_csv(&mut bytes)?;
                    let tag = l.method.replace('+', "_");
                    write_atomic(&dir.join(format!("{tag}_{i:04}.csv")), &bytes)?;
                }
            }
        }
        Ok((set.len(), lambda, problem.rescale, aligned, logical))
    }

    fn run_cell(&self, cell: &Cell) -> Result<CellSamples> {
        let rows = (0..self.instances.len())
            .into_par_iter()
            .map(|i| self.run_instance(cell, i))
            .collect::<Result<Vec<_>>>()?;
        let mut s = CellSamples {
            reads: Vec::new(),
            lambdas: Vec::new(),
            rescales: Vec::new(),
            aligned: Vec::new(),
            logical: Vec::new(),
        };
        for (n, l, r, a, sets) in rows {
            s.reads.push(n);
            s.lambdas.push(l);
            s.rescales.push(r);
            s.aligned.push(a);
            s.logical.push(sets);
        }
        Ok(s)
    }

    fn summarize(&self, cell: &Cell, s: &CellSamples, targets: &[f64]) -> Result<CellReport> {
        let config = self.config;
        let timing = config.timing_for(cell);
        let mut methods = Vec::new();
        for (k, &m) in config.mapping.methods.iter().enumerate() {
            let mut rows = Vec::with_capacity(self.instances.len());
            for (i, sets) in s.logical.iter().enumerate() {
                let set = &sets[k];
                // Success is a fraction of all reads: samples dropped by the
                // aligned-only mapping count as misses.
                let success = if set.is_empty() {
                    0.0
                } else {
                    success_rate(set, targets[i])? * set.len() as f64 / s.reads[i] as f64
                };
                let count = set.len().max(1) as f64;
                let gd: Vec<u64> = set.gd_updates.iter().flatten().copied().collect();
                rows.push(InstanceMetrics {
                    instance: i,
                    target: targets[i],
                    samples: set.len(),
                    success,
                    samples_to_solution: time_to_solution(success, config.confidence, &timing)?.samples,
                    mean_energy: if set.is_empty() { f64::NAN } else { set.energies.iter().sum::<f64>() / count },
                    min_energy: set.min_energy().unwrap_or(f64::NAN),
                    aligned_fraction: s.aligned[i],
                    gd_updates: (!gd.is_empty()).then(|| gd.iter().sum::<u64>() as f64 / gd.len() as f64),
                });
            }
            let col = |f: &dyn Fn(&InstanceMetrics) -> f64| Stat::of(&rows.iter().map(f).collect::<Vec<_>>());
            let sts = |r: &InstanceMetrics| r.samples_to_solution;
            methods.push(MethodSummary {
                method: m.tag().to_string(),
                success: col(&|r| r.success),
                samples_to_solution: col(&sts),
                tts_anneal_us: col(&|r| sts(r) * timing.t_a),
                tts_access_us: col(&|r| timing.access_time(sts(r))),
                mean_energy: col(&|r| r.mean_energy),
                min_energy: col(&|r| r.min_energy),
                aligned_fraction: col(&|r| r.aligned_fraction),
                gd_updates: rows
                    .iter()
                    .all(|r| r.gd_updates.is_some())
                    .then(|| col(&|r| r.gd_updates.unwrap_or(f64::NAN))),
                per_instance: rows,
            });
        }
        Ok(CellReport {
            cell: *cell,
            error: None,
            lambda: Some(Stat::of(&s.lambdas)),
            rescale: Some(Stat::of(&s.rescales)),
            methods,
            eaee: self.edge_energies(cell, s),
        })
    }

    /// Edge-energy summary from the first method whose sets are all
    /// nonempty; `None` when the ensemble has no shared topology.
    fn edge_energies(&self, cell: &Cell, s: &CellSamples) -> Option<EaeeSummary> {
        let k = (0..self.config.mapping.methods.len()).find(|&k| s.logical.iter().all(|sets| !sets[k].is_empty()))?;
        let pairs: Vec<(&Instance, &LogicalSampleSet)> =
            self.instances.iter().zip(s.logical.iter().map(|sets| &sets[k])).collect();
        let report = eaee(&pairs).ok()?;
        let seed = derive_seed(self.config.sampler.seed, Purpose::Bootstrap, cell.index as u64);
        let interval = bootstrap_variance(&report, self.config.bootstrap, 0.95, seed);
        let block_len = match self.config.sampler.schedule {
            Schedule::Equilibrium { .. } => self.config.sampler.equilibrium_layout().1,
            Schedule::Anneal { .. } => 1,
        };
        let sampling_interval = bootstrap_variance_blocks(&pairs, block_len, self.config.bootstrap, 0.95, seed).ok()?;
        let classes = match source_pattern_classes(self.embedding, self.graph) {
            Ok(classes) => class_means(&report, &classes)
                .into_iter()
                .zip(&classes)
                .map(|(mean, c)| ClassMean { pattern: pattern_id(&c.key), edges: c.edges.len(), chi: c.chi, mean })
                .collect(),
            Err(_) => Vec::new(),
        };
        Some(EaeeSummary {
            method: self.config.mapping.methods[k].tag().to_string(),
            mean: report.mean,
            variance: report.variance,
            interval,
            sampling_interval,
            edges: report.edges,
            e: report.e,
            classes,
        })
    }
}

/// Runs a validated configuration. Stage failures inside a cell are
/// recorded in that cell's report; setup failures abort the run.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?
            .install(|| run_inner(config)),
        None => run_inner(config),
    }
}

fn run_inner(config: &ExperimentConfig) -> Result<RunReport> {
    let instances =
        (0..config.ensemble.count).into_par_iter().map(|i| config.ensemble.generate(i)).collect::<Result<Vec<_>>>()?;
    let graph = config.graph()?;
    let embedding = config.ensemble.embed(&graph, config.embedding.layout)?;
    validate(&embedding, &instances[0], &graph).into_result()?;
    let instance_ids: Vec<String> = instances.iter().map(content_id).collect();
    let record = EmbeddingRecord { graph: graph.spec(), embedding };
    let embedding_id = content_id(&record);
    let embedding = record.embedding.clone();
    let config_id = content_id(config);

    let out = config.output_dir.as_deref();
    if let Some(dir) = out {
        write_json(&dir.join("config.json"), config)?;
        for (i, inst) in instances.iter().enumerate() {
            write_document(&dir.join("instances").join(format!("{i:04}.json")), "instance", inst, BTreeMap::new())?;
        }
        write_document(&dir.join("embedding.json"), "embedding", &record, BTreeMap::new())?;
    }

    let remote = config.endpoint.as_ref().map(RemoteSampler::new);
    let sampler: &dyn Sampler = match &remote {
        Some(r) => r,
        None => &LocalSampler,
    };
    let ctx = Context {
        config,
        instances: &instances,
        instance_ids: &instance_ids,
        embedding: &embedding,
        embedding_id: &embedding_id,
        graph: &graph,
        sampler,
        out,
    };

    let cells = config.cells();
    let outcomes: Vec<Result<CellSamples>> = cells.par_iter().map(|c| ctx.run_cell(c)).collect();

    let exact: Vec<Option<f64>> = instances
        .par_iter()
        .map(|inst| {
            inst.target_energy
                .or_else(|| (inst.n <= BRUTE_FORCE_CAP).then(|| brute_min(inst).ok().map(|r| r.min_energy)).flatten())
        })
        .collect();
    let targets: Vec<f64> = exact
        .iter()
        .enumerate()
        .map(|(i, e)| {
            e.unwrap_or_else(|| {
                outcomes
                    .iter()
                    .flatten()
                    .flat_map(|s| s.logical[i].iter().filter_map(LogicalSampleSet::min_energy))
                    .fold(f64::INFINITY, f64::min)
            })
        })
        .collect();

    let reports: Vec<CellReport> = cells
        .iter()
        .zip(&outcomes)
        .map(|(cell, o)| match o {
            Ok(s) => ctx.summarize(cell, s, &targets).unwrap_or_else(|e| CellReport::failed(*cell, &e)),
            Err(e) => CellReport::failed(*cell, e),
        })
        .collect();

    let report =
        RunReport { name: config.name.clone(), config_id, instances: instances.len(), targets, cells: reports };
    if let Some(dir) = out {
        write_report(dir, &report)?;
    }
    Ok(report)
}

/// Writes per-cell metrics, the run metrics, the CSV tables and the
/// table sidecar.
pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    for c in &report.cells {
        write_json(&cell_dir(dir, c.cell.index).join("metrics.json"), c)?;
    }
    let parents = BTreeMap::from([("config".to_string(), report.config_id.clone())]);
    let metrics_id = write_document(&dir.join("metrics.json"), "run-report", report, parents)?;
    write_atomic(&dir.join("report.csv"), report.to_csv()?.as_bytes())?;
    write_atomic(&dir.join("eaee.csv"), report.eaee_csv()?.as_bytes())?;
    let sidecar = serde_json::json!({
        "schema": "table",
        "version": crate::formats::SCHEMA_VERSION,
        "name": report.name,
        "parents": { "config": report.config_id, "metrics": metrics_id },
        "tables": {
            "report.csv": {
                "columns": REPORT_COLUMNS,
                "rows": "one per cell and mapping method; statistics over instances",
                "units": { "t_a_us": "microseconds", "tts_anneal_us_median": "microseconds", "tts_access_us_median": "microseconds" },
            },
            "eaee.csv": {
                "columns": ["cell", "xi", "a", "b", "e_ab"],
                "rows": "one per cell and logical edge",
            },
        },
        "failed_cells": report.failed_cells(),
    });
    write_json(&dir.join("report.json"), &sidecar)
}
