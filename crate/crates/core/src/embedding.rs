//! Chain embeddings of logical problems into Chimera graphs.
//!
//! Every generated chain is a simple path stored in path order; the order
//! defines within-chain distances. Generators place chains in the top-left
//! corner of the graph and fail if that region has defects.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{lattice_edges, lattice_index, Instance};
use crate::rng::{self, Purpose};
use crate::topology::{distances_within, PhysicalGraph, Qubit, Shore};

/// How an embedding was produced; determines its logical edge set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingSource {
    Clique { n: usize, layout: CliqueLayout },
    Biclique { n: usize },
    Cubic { dims: [usize; 3] },
}

impl EmbeddingSource {
    /// Logical edges the embedding is built to realize, `a < b`, sorted.
    pub fn logical_edges(&self) -> Vec<(usize, usize)> {
        match *self {
            EmbeddingSource::Clique { n, .. } => (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect(),
            EmbeddingSource::Biclique { n } => {
                let half = n / 2;
                (0..half).flat_map(|a| (half..n).map(move |b| (a, b))).collect()
            }
            EmbeddingSource::Cubic { dims } => {
                let mut e = lattice_edges(dims);
                e.sort_unstable();
                e
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub chains: Vec<Vec<Qubit>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<EmbeddingSource>,
}

impl Embedding {
    pub fn new(chains: Vec<Vec<Qubit>>) -> Self {
        Embedding { chains, source: None }
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn chain_lengths(&self) -> Vec<usize> {
        self.chains.iter().map(Vec::len).collect()
    }

    pub fn num_qubits(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    /// `qubit -> (chain, position)` for every embedded qubit. Later chains
    /// win on overlap; `validate` reports overlaps separately.
    pub fn owners(&self) -> HashMap<Qubit, (usize, usize)> {
        let mut map = HashMap::with_capacity(self.num_qubits());
        for (a, chain) in self.chains.iter().enumerate() {
            for (p, &q) in chain.iter().enumerate() {
                map.insert(q, (a, p));
            }
        }
        map
    }

    pub fn connections(&self, graph: &PhysicalGraph) -> Connections {
        Connections::new(self, graph)
    }
}

/// Physical couplers grouped by the chains they touch.
#[derive(Clone, Debug, Default)]
pub struct Connections {
    /// Couplers between distinct chains, keyed `(a, b)` with `a < b`; each
    /// coupler is stored as `(qubit in C_a, qubit in C_b)`.
    pub between: BTreeMap<(usize, usize), Vec<(Qubit, Qubit)>>,
    /// Couplers with both endpoints in the same chain.
    pub within: Vec<Vec<(Qubit, Qubit)>>,
}

impl Connections {
    fn new(embedding: &Embedding, graph: &PhysicalGraph) -> Self {
        let owners = embedding.owners();
        let mut between: BTreeMap<(usize, usize), Vec<(Qubit, Qubit)>> = BTreeMap::new();
        let mut within = vec![Vec::new(); embedding.len()];
        for (p, q) in graph.couplers() {
            let (Some(&(a, _)), Some(&(b, _))) = (owners.get(&p), owners.get(&q)) else {
                continue;
            };
            if a == b {
                within[a].push((p, q));
            } else if a < b {
                between.entry((a, b)).or_default().push((p, q));
            } else {
                between.entry((b, a)).or_default().push((q, p));
            }
        }
        Connections { between, within }
    }

    pub fn couplers(&self, a: usize, b: usize) -> &[(Qubit, Qubit)] {
        self.between.get(&(a.min(b), a.max(b))).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn num_chain_couplers(&self) -> usize {
        self.within.iter().map(Vec::len).sum()
    }
}

/// All-pairs distances inside one chain's induced subgraph, indexed by path
/// position. `None` marks disconnected pairs.
pub fn chain_distances(graph: &PhysicalGraph, chain: &[Qubit]) -> Vec<Vec<Option<usize>>> {
    chain.iter().map(|&q| distances_within(graph, chain, q).expect("source is in its chain")).collect()
}

fn check_region(graph: &PhysicalGraph, chains: &[Vec<Qubit>], what: &str) -> Result<()> {
    for chain in chains {
        for &q in chain {
            if !graph.is_live(q) {
                let s = graph.site(q);
                return Err(Error::Embedding(format!(
                    "{what}: qubit {q} (cell {},{} {:?} {}) is defective",
                    s.row, s.col, s.shore, s.index
                )));
            }
        }
        for w in chain.windows(2) {
            if !graph.has_coupler(w[0], w[1]) {
                return Err(Error::Embedding(format!("{what}: chain coupler ({}, {}) is defective", w[0], w[1])));
            }
        }
    }
    Ok(())
}

fn check_coverage(graph: &PhysicalGraph, embedding: &Embedding, what: &str) -> Result<()> {
    let conn = embedding.connections(graph);
    let edges = embedding.source.as_ref().map(EmbeddingSource::logical_edges).unwrap_or_default();
    for (a, b) in edges {
        if conn.couplers(a, b).is_empty() {
            return Err(Error::Embedding(format!("{what}: logical edge ({a}, {b}) has no working coupler")));
        }
    }
    Ok(())
}

/// Native clique layouts on a `w x w` block of cells, `w = ceil(n/4)`.
///
/// Group `g` owns four chains. Each is an L-shaped path: a vertical run in
/// column `c_g` over the rows `{r_0..r_g}`, then a horizontal run in row
/// `r_g` over the columns `{c_g..c_{w-1}}`. Columns are placed starting from
/// `c_{w-1}` and extended one at a time to the left or right; rows are placed
/// starting from `r_0` and extended up or down. Any such placement realizes
/// `K_n` with chains of length `w + 1`; the placements differ in where chains
/// touch and hence in their connection patterns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase")]
pub enum CliqueLayout {
    /// `c_g = r_g = g`: the staircase layout.
    Triangle,
    /// Extension directions drawn from a seeded stream, one per size.
    Drawn { seed: u64 },
}

/// Seed of the default drawn layout. The published clique embeddings came
/// from a randomized tool; this draw reproduces their connection-pattern
/// counts at 32 and 64 variables.
pub const DEFAULT_CLIQUE_SEED: u64 = 5;

impl Default for CliqueLayout {
    fn default() -> Self {
        CliqueLayout::Drawn { seed: DEFAULT_CLIQUE_SEED }
    }
}

impl CliqueLayout {
    /// `(columns, rows)` of each group, both permutations of `0..w`.
    pub fn placement(&self, w: usize) -> (Vec<usize>, Vec<usize>) {
        let mut extend_low = vec![true; w.saturating_sub(1)];
        let mut extend_low_rows = vec![false; w.saturating_sub(1)];
        if let CliqueLayout::Drawn { seed } = *self {
            let mut r = rng::stream(seed, Purpose::CliqueLayout, w as u64);
            for b in extend_low.iter_mut() {
                *b = rng::spin(&mut r) > 0;
            }
            for b in extend_low_rows.iter_mut() {
                *b = rng::spin(&mut r) > 0;
            }
        }
        let mut cols = vec![0i64; w];
        let (mut lo, mut hi) = (0i64, 0i64);
        for (step, g) in (0..w.saturating_sub(1)).rev().enumerate() {
            if extend_low[step] {
                lo -= 1;
                cols[g] = lo;
            } else {
                hi += 1;
                cols[g] = hi;
            }
        }
        let cols = cols.iter().map(|&c| (c - lo) as usize).collect();
        let mut rows = vec![0i64; w];
        let (mut lo, mut hi) = (0i64, 0i64);
        for g in 1..w {
            if extend_low_rows[g - 1] {
                lo -= 1;
                rows[g] = lo;
            } else {
                hi += 1;
                rows[g] = hi;
            }
        }
        let rows = rows.iter().map(|&r| (r - lo) as usize).collect();
        (cols, rows)
    }
}

pub fn embed_clique(n: usize, graph: &PhysicalGraph) -> Result<Embedding> {
    embed_clique_with(n, graph, CliqueLayout::default())
}

pub fn embed_clique_with(n: usize, graph: &PhysicalGraph, layout: CliqueLayout) -> Result<Embedding> {
    if n == 0 {
        return Err(Error::Embedding("clique needs at least one variable".into()));
    }
    let w = n.div_ceil(4);
    if w > graph.m() {
        return Err(Error::Embedding(format!("clique of {n} needs {w}x{w} cells, graph is C_{}", graph.m())));
    }
    let (cols, rows) = layout.placement(w);
    let mut chains = Vec::with_capacity(n);
    for v in 0..n {
        let (g, k) = (v / 4, v % 4);
        let (r_lo, r_hi) = span(&rows[..=g]);
        let (c_lo, c_hi) = span(&cols[g..]);
        let mut chain = Vec::with_capacity(w + 1);
        if rows[g] == r_hi {
            chain.extend((r_lo..=r_hi).map(|r| graph.qubit(r, cols[g], Shore::Vertical, k)));
        } else {
            chain.extend((r_lo..=r_hi).rev().map(|r| graph.qubit(r, cols[g], Shore::Vertical, k)));
        }
        if cols[g] == c_lo {
            chain.extend((c_lo..=c_hi).map(|c| graph.qubit(rows[g], c, Shore::Horizontal, k)));
        } else {
            chain.extend((c_lo..=c_hi).rev().map(|c| graph.qubit(rows[g], c, Shore::Horizontal, k)));
        }
        chains.push(chain);
    }
    check_region(graph, &chains, "clique")?;
    let emb = Embedding { chains, source: Some(EmbeddingSource::Clique { n, layout }) };
    check_coverage(graph, &emb, "clique")?;
    Ok(emb)
}

fn span(values: &[usize]) -> (usize, usize) {
    let lo = values.iter().copied().min().unwrap_or(0);
    let hi = values.iter().copied().max().unwrap_or(0);
    (lo, hi)
}

/// Biclique embedding: side-one chain `4y + k` is horizontal index `k` along
/// cell row `y`; side-two chain `n/2 + 4x + k` is vertical index `k` down
/// cell column `x`. Chains span `ceil(n/8)` cells.
pub fn embed_biclique(n: usize, graph: &PhysicalGraph) -> Result<Embedding> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Embedding(format!("biclique needs even n >= 2, got {n}")));
    }
    let half = n / 2;
    let w = half.div_ceil(4);
    if w > graph.m() {
        return Err(Error::Embedding(format!("biclique of {n} needs {w}x{w} cells, graph is C_{}", graph.m())));
    }
    let mut chains = Vec::with_capacity(n);
    for a in 0..half {
        let (y, k) = (a / 4, a % 4);
        chains.push((0..w).map(|c| graph.qubit(y, c, Shore::Horizontal, k)).collect());
    }
    for b in 0..half {
        let (x, k) = (b / 4, b % 4);
        chains.push((0..w).map(|r| graph.qubit(r, x, Shore::Vertical, k)).collect());
    }
    check_region(graph, &chains, "biclique")?;
    let emb = Embedding { chains, source: Some(EmbeddingSource::Biclique { n }) };
    check_coverage(graph, &emb, "biclique")?;
    Ok(emb)
}

// Per-layer corner (row bit, column bit) of the 2x2 block; consecutive
// layers differ in one bit so each layer link shares two couplers.
const LAYER_CORNER: [(usize, usize); 8] = [(0, 0), (0, 1), (1, 1), (1, 0), (0, 0), (0, 1), (1, 1), (1, 0)];
const LAYER_H_INDEX: [usize; 8] = [0, 2, 0, 2, 1, 3, 1, 3];
const LAYER_V_INDEX: [usize; 8] = [0, 0, 2, 2, 1, 1, 3, 3];

/// Cubic-lattice embedding with four qubits per site.
///
/// Lattice column `(x, y)` occupies the 2x2 cell block at cell rows
/// `2y..2y+2` and cell columns `2x..2x+2`; its up to eight layers share the
/// block. A layer chain is a horizontal pair (far cell, corner cell) followed
/// by a vertical pair (corner cell, far cell). The corner flips with the
/// parity of `x` and `y`, which keeps each chain's horizontal pair in line
/// with its x-neighbors and its vertical pair in line with its y-neighbors.
pub fn embed_cubic(dims: [usize; 3], graph: &PhysicalGraph) -> Result<Embedding> {
    let [lx, ly, lz] = dims;
    if dims.contains(&0) {
        return Err(Error::Embedding("lattice dimensions must be at least 1".into()));
    }
    if lz > 8 || 2 * lx > graph.m() || 2 * ly > graph.m() {
        return Err(Error::Embedding(format!(
            "lattice {lx}x{ly}x{lz} needs {}x{} cells and at most 8 layers, graph is C_{}",
            2 * ly,
            2 * lx,
            graph.m()
        )));
    }
    let mut chains = vec![Vec::new(); lx * ly * lz];
    for x in 0..lx {
        for y in 0..ly {
            for z in 0..lz {
                let rho = LAYER_CORNER[z].0 ^ (y & 1);
                let kappa = LAYER_CORNER[z].1 ^ (x & 1);
                let (h, t) = (LAYER_H_INDEX[z], LAYER_V_INDEX[z]);
                let (r0, c0) = (2 * y, 2 * x);
                chains[lattice_index(dims, x, y, z)] = vec![
                    graph.qubit(r0 + rho, c0 + 1 - kappa, Shore::Horizontal, h),
                    graph.qubit(r0 + rho, c0 + kappa, Shore::Horizontal, h),
                    graph.qubit(r0 + rho, c0 + kappa, Shore::Vertical, t),
                    graph.qubit(r0 + 1 - rho, c0 + kappa, Shore::Vertical, t),
                ];
            }
        }
    }
    check_region(graph, &chains, "cubic")?;
    let emb = Embedding { chains, source: Some(EmbeddingSource::Cubic { dims }) };
    check_coverage(graph, &emb, "cubic")?;
    Ok(emb)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ValidationIssue {
    ChainCount { expected: usize, found: usize },
    EmptyChain { chain: usize },
    DeadQubit { chain: usize, qubit: Qubit },
    Overlap { qubit: Qubit, first: usize, second: usize },
    Disconnected { chain: usize },
    Uncovered { a: usize, b: usize },
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::ChainCount { expected, found } => {
                write!(f, "expected {expected} chains, found {found}")
            }
            Self::EmptyChain { chain } => write!(f, "chain {chain} is empty"),
            Self::DeadQubit { chain, qubit } => {
                write!(f, "chain {chain} uses missing qubit {qubit}")
            }
            Self::Overlap { qubit, first, second } => {
                write!(f, "disjointness: qubit {qubit} in chains {first} and {second}")
            }
            Self::Disconnected { chain } => write!(f, "chain {chain} is not connected"),
            Self::Uncovered { a, b } => {
                write!(f, "coverage: logical edge ({a}, {b}) has no physical coupler")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    /// Physical coupler count for every nonzero logical coupling.
    pub edge_couplers: Vec<((usize, usize), usize)>,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passes() {
            Ok(self)
        } else {
            let text: Vec<String> = self.issues.iter().take(5).map(|i| i.to_string()).collect();
            Err(Error::Validation(text.join("; ")))
        }
    }
}

pub fn validate(embedding: &Embedding, instance: &Instance, graph: &PhysicalGraph) -> ValidationReport {
    let mut issues = Vec::new();
    if embedding.len() != instance.n {
        issues.push(ValidationIssue::ChainCount { expected: instance.n, found: embedding.len() });
    }
    let mut seen: HashMap<Qubit, usize> = HashMap::new();
    for (a, chain) in embedding.chains.iter().enumerate() {
        if chain.is_empty() {
            issues.push(ValidationIssue::EmptyChain { chain: a });
            continue;
        }
        for &q in chain {
            if !graph.is_live(q) {
                issues.push(ValidationIssue::DeadQubit { chain: a, qubit: q });
            }
            if let Some(&first) = seen.get(&q) {
                issues.push(ValidationIssue::Overlap { qubit: q, first, second: a });
            } else {
                seen.insert(q, a);
            }
        }
        let reach = distances_within(graph, chain, chain[0]).expect("chain head is in chain");
        if reach.iter().any(Option::is_none) {
            issues.push(ValidationIssue::Disconnected { chain: a });
        }
    }
    let conn = embedding.connections(graph);
    let mut edge_couplers = Vec::with_capacity(instance.j.len());
    for &(a, b, _) in &instance.j {
        if a >= embedding.len() || b >= embedding.len() {
            continue;
        }
        let count = conn.couplers(a, b).len();
        if count == 0 {
            issues.push(ValidationIssue::Uncovered { a, b });
        }
        edge_couplers.push(((a, b), count));
    }
    ValidationReport { issues, edge_couplers }
}
