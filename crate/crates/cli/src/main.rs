//! `embedtune`: generate, embed, compile, sample, map and report, one stage
//! per subcommand with files as the interface, plus `run` for whole
//! configured experiments and `serve` for a loopback sampler service.
//!
//! Exit codes: 0 success, 1 failure or partial cell failure, 2 bad
//! configuration or arguments.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use embedtune_core::compile::{chain_strength, compensate, rescale, CompensationConfig, PhysicalProblem, Xi};
use embedtune_core::embedding::{validate, CliqueLayout, DEFAULT_CLIQUE_SEED};
use embedtune_core::formats::{read_document, write_atomic, write_document, Document};
use embedtune_core::metrics::{source_pattern_classes, success_rate, time_to_solution, TimingModel};
use embedtune_core::pipeline::{apply_mapping, preset, run, EmbeddingRecord, EnsembleSpec, ExperimentConfig, Mapping};
use embedtune_core::postprocess::LogicalSampleSet;
use embedtune_core::reference::{brute_min, BRUTE_FORCE_CAP};
use embedtune_core::sampler::remote::{serve, RemoteSampler, ServeOptions, ENDPOINT_ENV};
use embedtune_core::sampler::{LocalSampler, SampleSet, Sampler, SamplerParams, Schedule, DEFAULT_BURN_IN};
use embedtune_core::spectral::pattern_id;
use embedtune_core::topology::{build_chimera, PhysicalGraph};
use embedtune_core::{GraphSpec, Instance, ProblemKind};

/// Bad arguments or configuration; reported with exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(e: impl std::fmt::Display) -> anyhow::Error {
    ConfigError(e.to_string()).into()
}

#[derive(Parser)]
#[command(name = "embedtune", version, about = "Embedded Ising experiments on Chimera graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate problem instances.
    Gen(GenArgs),
    /// Build the native embedding for a problem family.
    Embed(EmbedArgs),
    /// Compile an instance onto an embedding.
    Compile(CompileArgs),
    /// Sample a compiled problem locally or on a remote service.
    Sample(SampleArgs),
    /// Map physical samples back to logical states.
    Map(MapArgs),
    /// Summarize logical samples or an embedding.
    Report(ReportArgs),
    /// Run a whole experiment from a config file or preset.
    Run(RunArgs),
    /// Serve the local sampler over HTTP.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Csg,
    Bsg,
    #[value(name = "3dsg")]
    Cubic,
    Cdma,
}

impl From<Kind> for ProblemKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Csg => ProblemKind::Clique,
            Kind::Bsg => ProblemKind::Biclique,
            Kind::Cubic => ProblemKind::Cubic,
            Kind::Cdma => ProblemKind::Cdma,
        }
    }
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split([',', 'x'])
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad dimension {p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[usize; 3]>::try_from(parts).map_err(|_| "dims need three entries, e.g. 2,2,2".to_string())
}

#[derive(Args)]
struct FamilyArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Variable count (implied by --dims for 3dsg).
    #[arg(long, default_value_t = 0)]
    n: usize,
    /// Lattice dimensions for 3dsg, e.g. 2,2,2.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<[usize; 3]>,
}

impl FamilyArgs {
    fn spec(&self, count: usize, seed: u64) -> EnsembleSpec {
        EnsembleSpec { dims: self.dims, ..EnsembleSpec::new(self.kind.into(), self.n, count, seed) }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Instance i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CDMA load factor M/N.
    #[arg(long, default_value_t = 1.4)]
    load: f64,
    /// CDMA signal-to-noise ratio in dB.
    #[arg(long, default_value_t = 7.0)]
    snr_db: f64,
    /// Record the exhaustive minimum as the target energy (n <= 24).
    #[arg(long)]
    target: bool,
    /// Output directory; files are named 0000.json, 0001.json, ...
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Triangle,
    Drawn,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    family: FamilyArgs,
    /// Chimera size; the smallest that fits when absent.
    #[arg(long)]
    m: Option<usize>,
    /// Graph file with defects (JSON `{m, defect_qubits, defect_couplers}`).
    #[arg(long, conflicts_with = "m")]
    graph: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "drawn")]
    layout: Layout,
    #[arg(long, default_value_t = DEFAULT_CLIQUE_SEED)]
    layout_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    embedding: PathBuf,
    /// Relative chain strength; lambda = lambda0 * sqrt(N sigma^2).
    #[arg(long, default_value_t = 1.0)]
    lambda0: f64,
    /// Absolute chain strength; overrides --lambda0.
    #[arg(long)]
    lambda: Option<f64>,
    /// Susceptibility compensation with decay length xi: a number, `L`
    /// (mean chain length) or `inf`.
    #[arg(long, conflicts_with = "spectral")]
    xi: Option<Xi>,
    /// Spectral compensation at this transverse-field ratio.
    #[arg(long)]
    spectral: Option<f64>,
    /// Skip rescaling into the hardware ranges.
    #[arg(long)]
    no_rescale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Anneal,
    Equilibrium,
}

#[derive(Args)]
struct SamplerArgs {
    #[arg(long, value_enum, default_value = "anneal")]
    mode: Mode,
    #[arg(long, default_value_t = 100)]
    reads: usize,
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    #[arg(long, default_value_t = 0.1)]
    beta_start: f64,
    #[arg(long, default_value_t = 10.0)]
    beta_end: f64,
    /// Equilibrium inverse temperature.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SamplerArgs {
    fn params(&self) -> SamplerParams {
        SamplerParams {
            num_reads: self.reads,
            sweeps: self.sweeps,
            schedule: match self.mode {
                Mode::Anneal => Schedule::Anneal { beta_start: self.beta_start, beta_end: self.beta_end },
                Mode::Equilibrium => Schedule::Equilibrium { beta: self.beta, burn_in: self.burn_in },
            },
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    problem: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Remote sampler base URL; local sampling when absent.
    #[arg(long, env = ENDPOINT_ENV)]
    endpoint: Option<String>,
    /// Remote deadline in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    embedding: PathBuf,
    /// One of r, a, mv, r+gd, mv+gd, rand+gd.
    #[arg(long, default_value = "mv")]
    method: Mapping,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Logical samples as CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reference {
    /// Chain lengths and connection-pattern counts of the standard embeddings.
    #[value(name = "table2")]
    Published,
}

#[derive(Args)]
struct ReportArgs {
    /// Logical sample CSVs to score.
    #[arg(long, requires = "instance")]
    logical: Vec<PathBuf>,
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Target energy; the instance's recorded target or exhaustive minimum
    /// when absent.
    #[arg(long)]
    target: Option<f64>,
    /// Anneal time per sample in microseconds.
    #[arg(long, default_value_t = 219.0)]
    t_a: f64,
    #[arg(long, default_value_t = 0.99)]
    confidence: f64,
    /// Embedding to describe.
    #[arg(long)]
    embedding: Option<PathBuf>,
    #[arg(long, value_enum, requires = "embedding")]
    against: Option<Reference>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// chain-strength-sweep or eaee-xi-sweep.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    reads: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Remote sampler base URL.
    #[arg(long, env = ENDPOINT_ENV)]
    endpoint: Option<String>,
    #[arg(long)]
    save_samples: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8700")]
    addr: String,
    /// Delay before each job starts, in milliseconds.
    #[arg(long, default_value_t = 0)]
    delay_ms: u64,
}

fn read_body<T: serde::de::DeserializeOwned>(path: &Path, schema: &str) -> Result<Document<T>> {
    read_document(path, schema).with_context(|| format!("reading {}", path.display()))
}

/// Metadata file written next to a logical-sample CSV.
fn sidecar(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn graph_of(record: &EmbeddingRecord) -> Result<PhysicalGraph> {
    Ok(PhysicalGraph::from_spec(&record.graph)?)
}

fn gen(a: GenArgs) -> Result<ExitCode> {
    let mut spec = a.family.spec(a.count, a.seed);
    spec.load = a.load;
    spec.snr_db = a.snr_db;
    spec.validate().map_err(config_error)?;
    for i in 0..a.count {
        let mut inst = spec.generate(i).map_err(config_error)?;
        if a.target {
            if inst.n > BRUTE_FORCE_CAP {
                return Err(config_error(format!("--target needs n <= {BRUTE_FORCE_CAP}")));
            }
            inst.target_energy = Some(brute_min(&inst)?.min_energy);
        }
        write_document(&a.out.join(format!("{i:04}.json")), "instance", &inst, BTreeMap::new())?;
    }
    println!("wrote {} instances to {}", a.count, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn embed(a: EmbedArgs) -> Result<ExitCode> {
    let spec = a.family.spec(1, 0);
    spec.validate().map_err(config_error)?;
    let graph = match (&a.graph, a.m) {
        (Some(path), _) => {
            let g: Document<GraphSpec> = read_body(path, "graph")?;
            PhysicalGraph::from_spec(&g.body).map_err(config_error)?
        }
        (None, Some(m)) => build_chimera(m, &[], &[]).map_err(config_error)?,
        (None, None) => build_chimera(spec.min_graph_size()?, &[], &[])?,
    };
    let layout = match a.layout {
        Layout::Triangle => CliqueLayout::Triangle,
        Layout::Drawn => CliqueLayout::Drawn { seed: a.layout_seed },
    };
    let embedding = spec.embed(&graph, layout)?;
    let lengths = embedding.chain_lengths();
    let record = EmbeddingRecord { graph: graph.spec(), embedding };
    write_document(&a.out, "embedding", &record, BTreeMap::new())?;
    println!(
        "{} chains on C{} (lengths {}..{}) -> {}",
        lengths.len(),
        graph.m(),
        lengths.iter().min().copied().unwrap_or(0),
        lengths.iter().max().copied().unwrap_or(0),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn compile_cmd(a: CompileArgs) -> Result<ExitCode> {
    let inst: Document<Instance> = read_body(&a.instance, "instance")?;
    let emb: Document<EmbeddingRecord> = read_body(&a.embedding, "embedding")?;
    let graph = graph_of(&emb.body)?;
    validate(&emb.body.embedding, &inst.body, &graph).into_result()?;
    let lambda = match a.lambda {
        Some(l) => l,
        None => chain_strength(&inst.body, a.lambda0).map_err(config_error)?,
    };
    let config = match (a.xi, a.spectral) {
        (Some(xi), _) => CompensationConfig::susceptibility(xi),
        (None, Some(gamma)) => CompensationConfig::spectral(gamma),
        (None, None) => CompensationConfig::default(),
    };
    let mut problem = compensate(&inst.body, &emb.body.embedding, &graph, lambda, &config)?;
    if !a.no_rescale {
        problem = rescale(&problem)?;
    }
    problem.provenance.instance = Some(inst.id.clone());
    problem.provenance.embedding = Some(emb.id.clone());
    let parents = BTreeMap::from([("instance".to_string(), inst.id), ("embedding".to_string(), emb.id)]);
    write_document(&a.out, "problem", &problem, parents)?;
    println!(
        "{} qubits, {} couplers, lambda {lambda:.6}, R {:.6} -> {}",
        problem.h.len(),
        problem.j.len(),
        problem.rescale,
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn sample_cmd(a: SampleArgs) -> Result<ExitCode> {
    let problem: Document<PhysicalProblem> = read_body(&a.problem, "problem")?;
    let params = a.sampler.params();
    params.validate().map_err(config_error)?;
    let set = match &a.endpoint {
        Some(url) => RemoteSampler::new(url.as_str())
            .with_timeout(Duration::from_secs_f64(a.timeout))
            .sample(&problem.body, &params)?,
        None => LocalSampler.sample(&problem.body, &params)?,
    };
    let parents = BTreeMap::from([("problem".to_string(), problem.id)]);
    write_document(&a.out, "samples", &set, parents)?;
    println!("{} samples, min energy {} -> {}", set.len(), set.min_energy().unwrap_or(f64::NAN), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn map_cmd(a: MapArgs) -> Result<ExitCode> {
    let set: Document<SampleSet> = read_body(&a.samples, "samples")?;
    let inst: Document<Instance> = read_body(&a.instance, "instance")?;
    let emb: Document<EmbeddingRecord> = read_body(&a.embedding, "embedding")?;
    let logical = apply_mapping(a.method, &set.body, &emb.body.embedding, &inst.body, a.seed)?;
    let mut bytes = Vec::new();
    logical.write_csv(&mut bytes)?;
    write_atomic(&a.out, &bytes)?;
    let parents = BTreeMap::from([
        ("samples".to_string(), set.id.clone()),
        ("instance".to_string(), inst.id.clone()),
        ("embedding".to_string(), emb.id.clone()),
    ]);
    let meta = serde_json::json!({ "method": logical.method, "samples": logical.len() });
    write_document(&sidecar(&a.out), "logical", &meta, parents)?;
    println!(
        "{} logical samples ({}), min energy {} -> {}",
        logical.len(),
        logical.method,
        logical.min_energy().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Published chain lengths and pattern-class counts of the standard
/// embeddings, keyed by `(kind, n)`.
fn published_shape(kind: ProblemKind, n: usize) -> Option<(usize, usize)> {
    match (kind, n) {
        (ProblemKind::Clique, 32) => Some((9, 18)),
        (ProblemKind::Clique, 64) => Some((17, 51)),
        (ProblemKind::Biclique, 64) => Some((8, 10)),
        (ProblemKind::Cubic, _) => Some((4, 3)),
        _ => None,
    }
}

fn report_embedding(path: &Path, against: Option<Reference>) -> Result<bool> {
    use embedtune_core::embedding::EmbeddingSource;
    let emb: Document<EmbeddingRecord> = read_body(path, "embedding")?;
    let graph = graph_of(&emb.body)?;
    let e = &emb.body.embedding;
    let classes = source_pattern_classes(e, &graph)?;
    let lengths = e.chain_lengths();
    let max_len = lengths.iter().max().copied().unwrap_or(0);
    println!("chains: {}  max length: {max_len}  classes: {}", e.len(), classes.len());
    for c in &classes {
        println!("  {:<24} edges {:>5}  chi(1) {:.6}", pattern_id(&c.key), c.edges.len(), c.chi);
    }
    let Some(Reference::Published) = against else { return Ok(true) };
    let (kind, n) = match &e.source {
        Some(EmbeddingSource::Clique { n, .. }) => (ProblemKind::Clique, *n),
        Some(EmbeddingSource::Biclique { n }) => (ProblemKind::Biclique, *n),
        Some(EmbeddingSource::Cubic { dims }) => (ProblemKind::Cubic, dims.iter().product()),
        None => bail!("embedding has no recorded source to compare"),
    };
    let Some((want_len, want_classes)) = published_shape(kind, n) else {
        println!("no published row for {kind:?} n={n}");
        return Ok(true);
    };
    let ok = max_len == want_len && classes.len() == want_classes;
    println!(
        "{kind:?} n={n}: chain length {max_len} (published {want_len}), classes {} (published {want_classes}) -> {}",
        classes.len(),
        if ok { "match" } else { "MISMATCH" }
    );
    Ok(ok)
}

fn report(a: ReportArgs) -> Result<ExitCode> {
    let mut ok = true;
    if let Some(path) = &a.embedding {
        ok &= report_embedding(path, a.against)?;
    }
    if let Some(path) = &a.instance {
        let inst: Document<Instance> = read_body(path, "instance")?;
        let target = match (a.target, inst.body.target_energy) {
            (Some(t), _) | (None, Some(t)) => t,
            (None, None) if inst.body.n <= BRUTE_FORCE_CAP => brute_min(&inst.body)?.min_energy,
            _ => bail!("no target energy: pass --target or record one with gen --target"),
        };
        let timing = TimingModel::with_anneal(a.t_a);
        println!("target energy {target}");
        println!("file,method,samples,success,sts,tts_anneal_us,tts_access_us,min_energy");
        for p in &a.logical {
            let file = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            let mut set = LogicalSampleSet::read_csv(file).with_context(|| format!("reading {}", p.display()))?;
            if let Ok(meta) = read_document::<serde_json::Value>(&sidecar(p), "logical") {
                set.method = meta.body["method"].as_str().unwrap_or_default().to_string();
            }
            let success = if set.is_empty() { 0.0 } else { success_rate(&set, target)? };
            let tts = time_to_solution(success, a.confidence, &timing).map_err(config_error)?;
            println!(
                "{},{},{},{success},{},{},{},{}",
                p.display(),
                set.method,
                set.len(),
                tts.samples,
                tts.anneal_only_us,
                tts.access_us,
                set.min_energy().unwrap_or(f64::NAN)
            );
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run_cmd(a: RunArgs) -> Result<ExitCode> {
    let mut config = match (&a.config, &a.preset) {
        (Some(path), _) => ExperimentConfig::from_file(path).map_err(config_error)?,
        (None, Some(name)) => preset(name).map_err(config_error)?,
        (None, None) => return Err(config_error("pass --config or --preset")),
    };
    if let Some(out) = a.out {
        config.output_dir = Some(out);
    }
    if a.workers.is_some() {
        config.workers = a.workers;
    }
    if let Some(c) = a.count {
        config.ensemble.count = c;
    }
    if let Some(r) = a.reads {
        config.sampler.num_reads = r;
    }
    if let Some(s) = a.sweeps {
        config.sampler.sweeps = s;
    }
    if let Some(s) = a.seed {
        config.sampler.seed = s;
    }
    if a.endpoint.is_some() {
        config.endpoint = a.endpoint;
    }
    config.save_samples |= a.save_samples;
    config.validate().map_err(config_error)?;
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(ExitCode::SUCCESS);
    }
    let report = run(&config)?;
    print!("{}", report.to_csv()?);
    let failed = report.failed_cells();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed", report.cells.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn serve_cmd(a: ServeArgs) -> Result<ExitCode> {
    let server = serve(&a.addr, ServeOptions { delay: Duration::from_millis(a.delay_ms) }).map_err(config_error)?;
    println!("listening on {}", server.endpoint());
    server.join();
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Embed(a) => embed(a),
        Command::Compile(a) => compile_cmd(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Map(a) => map_cmd(a),
        Command::Report(a) => report(a),
        Command::Run(a) => run_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
