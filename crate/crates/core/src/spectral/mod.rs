//! Exact low-lying spectra of isolated chains and chain pairs in a
//! transverse field, and the compensation factors derived from them.
//!
//! Operator: `H = sum_(ij) w_ij z_i z_j - A sum_i x_i`. Without longitudinal
//! fields `H` commutes with the global spin flip, so it is diagonalized in
//! the two parity sectors separately. A sector state is labelled by a basis
//! state `s` with the top bit clear and stands for `|s> + p |not s>`.

pub mod lanczos;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compile::{coupler_positions, spread_with_factors, CompensationConfig, PhysicalProblem};
use crate::embedding::{Connections, Embedding};
use crate::error::{invalid, Error, Result};
use crate::instance::Instance;
use crate::metrics::{pattern_classes, PatternKey};
use crate::topology::{PhysicalGraph, Qubit};

use lanczos::{dense_eigenvalues, lowest_eigenvalues, LinearOperator};

/// Largest system handled by dense diagonalization.
pub const DENSE_CAP: usize = 14;
/// Largest system handled by the iterative solver.
pub const SPARSE_CAP: usize = 24;
/// `Solver::Auto` uses dense diagonalization up to this many qubits.
pub const DENSE_AUTO: usize = 10;
/// Probe coupling as a fraction of the chain strength.
pub const PROBE_FRACTION: f64 = 0.01;
/// Relative residual tolerance of the iterative solver.
pub const LANCZOS_TOLERANCE: f64 = 1e-10;
/// `E2 - E1` at or below this (relative to the probe) counts as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// Transverse-field Ising system without longitudinal fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseIsing {
    pub n: usize,
    pub couplings: Vec<(usize, usize, f64)>,
    pub transverse: f64,
}

impl TransverseIsing {
    pub fn new(n: usize, couplings: Vec<(usize, usize, f64)>, transverse: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("system needs at least one qubit"));
        }
        if let Some(&(i, j, _)) = couplings.iter().find(|&&(i, j, _)| i >= n || j >= n || i == j) {
            return Err(invalid(format!("coupling ({i}, {j}) is out of range")));
        }
        Ok(TransverseIsing { n, couplings, transverse })
    }

    /// Classical energy of basis state `bits` (bit set means spin down).
    pub fn diagonal(&self, bits: usize) -> f64 {
        self.couplings.iter().map(|&(i, j, w)| if (bits >> i ^ bits >> j) & 1 == 1 { -w } else { w }).sum()
    }

    fn operator(&self, parity: Option<f64>) -> FlipOperator {
        let (flips, twist) = match parity {
            None => (self.n, None),
            Some(p) => (self.n - 1, Some(((1usize << (self.n - 1)) - 1, p))),
        };
        let dim = 1usize << flips;
        let diag = if dim >= 1 << 14 {
            (0..dim).into_par_iter().map(|s| self.diagonal(s)).collect()
        } else {
            (0..dim).map(|s| self.diagonal(s)).collect()
        };
        FlipOperator { diag, flips, twist, field: self.transverse }
    }
}

/// `y = D x - A sum_i x[s ^ bit_i]`, plus `-A p x[s ^ mask]` for the flip of
/// the top bit inside a parity sector.
struct FlipOperator {
    diag: Vec<f64>,
    flips: usize,
    twist: Option<(usize, f64)>,
    field: f64,
}

impl FlipOperator {
    fn row(&self, x: &[f64], s: usize) -> f64 {
        let mut v = self.diag[s] * x[s];
        let mut off = 0.0;
        for i in 0..self.flips {
            off += x[s ^ (1 << i)];
        }
        if let Some((mask, p)) = self.twist {
            off += p * x[s ^ mask];
        }
        v -= self.field * off;
        v
    }
}

impl LinearOperator for FlipOperator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if y.len() >= 1 << 12 {
            y.par_iter_mut().enumerate().for_each(|(s, o)| *o = self.row(x, s));
        } else {
            for (s, o) in y.iter_mut().enumerate() {
                *o = self.row(x, s);
            }
        }
    }
}

fn route(n: usize, solver: Solver) -> Result<Solver> {
    let chosen = match solver {
        Solver::Auto if n <= DENSE_AUTO => Solver::Dense,
        Solver::Auto => Solver::Lanczos,
        s => s,
    };
    let cap = if chosen == Solver::Dense { DENSE_CAP } else { SPARSE_CAP };
    if n > cap {
        return Err(Error::SizeCap { what: format!("{chosen:?} spectrum").to_lowercase(), size: n, cap });
    }
    Ok(chosen)
}

fn solve(op: &FlipOperator, count: usize, solver: Solver) -> Result<Vec<f64>> {
    match solver {
        Solver::Dense => {
            let mut v = dense_eigenvalues(op)?;
            v.truncate(count);
            Ok(v)
        }
        _ => lowest_eigenvalues(op, count, LANCZOS_TOLERANCE),
    }
}

/// The `count` lowest levels, computed sector by sector and merged.
pub fn lowest_levels(system: &TransverseIsing, count: usize, solver: Solver) -> Result<Vec<f64>> {
    let solver = route(system.n, solver)?;
    let mut levels = Vec::with_capacity(2 * count);
    for p in [1.0, -1.0] {
        levels.extend(solve(&system.operator(Some(p)), count, solver)?);
    }
    levels.sort_by(f64::total_cmp);
    levels.truncate(count);
    Ok(levels)
}

/// The `count` lowest levels of one parity sector (`parity` is `+1` or `-1`).
pub fn sector_levels(system: &TransverseIsing, parity: f64, count: usize, solver: Solver) -> Result<Vec<f64>> {
    if parity.abs() != 1.0 {
        return Err(invalid("parity must be +1 or -1"));
    }
    let solver = route(system.n, solver)?;
    solve(&system.operator(Some(parity)), count, solver)
}

/// The `count` lowest levels of the full, unreduced operator.
pub fn lowest_levels_unreduced(system: &TransverseIsing, count: usize, solver: Solver) -> Result<Vec<f64>> {
    let solver = route(system.n, solver)?;
    solve(&system.operator(None), count, solver)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    /// Lowest three levels, ascending (fewer for a single qubit).
    pub energies: Vec<f64>,
    /// Effective transverse field or effective coupling.
    pub value: f64,
    pub qubits: usize,
    /// `E2 = E1` within tolerance; `value` is then zero.
    #[serde(default)]
    pub degenerate: bool,
}

/// Internal structure of one chain: length and couplers by position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainShape {
    pub len: usize,
    pub edges: Vec<(usize, usize)>,
}

impl ChainShape {
    pub fn path(len: usize) -> Self {
        ChainShape { len, edges: (1..len).map(|i| (i - 1, i)).collect() }
    }

    /// Shape of an embedded chain from its physical chain couplers.
    pub fn of_chain(chain: &[Qubit], within: &[(Qubit, Qubit)]) -> Self {
        let pos = |q: Qubit| chain.iter().position(|&c| c == q).expect("chain coupler inside chain");
        let mut edges: Vec<(usize, usize)> = within
            .iter()
            .map(|&(p, q)| {
                let (a, b) = (pos(p), pos(q));
                (a.min(b), a.max(b))
            })
            .collect();
        edges.sort_unstable();
        ChainShape { len: chain.len(), edges }
    }
}

/// Effective transverse field of one ferromagnetic chain:
/// `A_eff = (E1 - E0) / 2` with chain couplers `-B lambda`.
pub fn chain_gap(shape: &ChainShape, a: f64, b: f64, lambda: f64, solver: Solver) -> Result<SpectralResult> {
    let couplings = shape.edges.iter().map(|&(i, j)| (i, j, -b * lambda)).collect();
    let system = TransverseIsing::new(shape.len, couplings, a)?;
    let energies = lowest_levels(&system, 3, solver)?;
    Ok(SpectralResult { value: (energies[1] - energies[0]) / 2.0, qubits: shape.len, degenerate: false, energies })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub spectrum: SpectralResult,
    /// `J_eff / J`.
    pub chi: f64,
}

/// Two chains with couplers `-B lambda`, joined by `couplers` (positions in
/// `a` and `b`) that share `B * coupling` equally. Chain `b` follows `a`.
pub fn pair_system(
    shape_a: &ChainShape,
    shape_b: &ChainShape,
    couplers: &[(usize, usize)],
    a: f64,
    b: f64,
    lambda: f64,
    coupling: f64,
) -> Result<TransverseIsing> {
    if couplers.is_empty() {
        return Err(invalid("chains share no coupler"));
    }
    let off = shape_a.len;
    let per = b * coupling / couplers.len() as f64;
    let mut couplings: Vec<(usize, usize, f64)> = shape_a.edges.iter().map(|&(i, j)| (i, j, -b * lambda)).collect();
    couplings.extend(shape_b.edges.iter().map(|&(i, j)| (off + i, off + j, -b * lambda)));
    for &(p, q) in couplers {
        if p >= shape_a.len || q >= shape_b.len {
            return Err(invalid(format!("coupler position ({p}, {q}) is outside the chains")));
        }
        couplings.push((p, off + q, per));
    }
    TransverseIsing::new(off + shape_b.len, couplings, a)
}

/// Effective coupling of two chains: `J_eff = sign(J) (E2 - E1) / (2 B)`
/// and `chi = J_eff / J`, for the system built by `pair_system`.
#[allow(clippy::too_many_arguments)]
pub fn pair_jeff(
    shape_a: &ChainShape,
    shape_b: &ChainShape,
    couplers: &[(usize, usize)],
    a: f64,
    b: f64,
    lambda: f64,
    coupling: f64,
    solver: Solver,
) -> Result<PairResult> {
    if coupling == 0.0 {
        return Err(invalid("probe coupling must be nonzero"));
    }
    let system = pair_system(shape_a, shape_b, couplers, a, b, lambda, coupling)?;
    let energies = lowest_levels(&system, 3, solver)?;
    let gap = energies[2] - energies[1];
    let degenerate = gap <= DEGENERACY_TOLERANCE * coupling.abs().max(energies[1].abs());
    let jeff = if degenerate { 0.0 } else { coupling.signum() * gap / (2.0 * b) };
    Ok(PairResult {
        chi: jeff / coupling,
        spectrum: SpectralResult { energies, value: jeff, qubits: system.n, degenerate },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpectrum {
    pub id: String,
    pub key: PatternKey,
    pub edges: Vec<(usize, usize)>,
    pub chi: f64,
    pub degenerate: bool,
}

/// Per-pattern spectral susceptibilities at `A = gamma * lambda`, `B = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub lambda: f64,
    pub gamma: f64,
    pub classes: Vec<ClassSpectrum>,
}

impl SpectralReport {
    /// Pattern id to `chi`.
    pub fn chi_by_pattern(&self) -> BTreeMap<String, f64> {
        self.classes.iter().map(|c| (c.id.clone(), c.chi)).collect()
    }
}

/// Readable id of a pattern, e.g. `9x9:0-8,4-4`.
pub fn pattern_id(key: &PatternKey) -> String {
    let pairs: Vec<String> = key.pairs.iter().map(|(p, q)| format!("{p}-{q}")).collect();
    format!("{}x{}:{}", key.lengths.0, key.lengths.1, pairs.join(","))
}

/// Spectral susceptibility of every connection pattern among `edges`,
/// one diagonalization per pattern class.
pub fn spectral_classes(
    embedding: &Embedding,
    graph: &PhysicalGraph,
    edges: &[(usize, usize)],
    lambda: f64,
    gamma: f64,
) -> Result<SpectralReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda must be positive"));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma must be non-negative"));
    }
    let classes = pattern_classes(embedding, graph, edges)?;
    if let Some(c) = classes.iter().find(|c| c.key.lengths.0 + c.key.lengths.1 > SPARSE_CAP) {
        return Err(Error::SizeCap {
            what: format!(
                "two-chain spectral system for pattern {} (use the susceptibility method for chains this long)",
                pattern_id(&c.key)
            ),
            size: c.key.lengths.0 + c.key.lengths.1,
            cap: SPARSE_CAP,
        });
    }
    let conn = embedding.connections(graph);
    let results: Vec<ClassSpectrum> = classes
        .into_par_iter()
        .map(|class| {
            let (chi, degenerate) = if gamma == 0.0 {
                // Rigid chains: the probe coupling passes through unchanged.
                (1.0, false)
            } else {
                let (a, b) = class.edges[0];
                let r = class_pair(embedding, &conn, a, b, gamma * lambda, lambda)?;
                (r.chi, r.spectrum.degenerate)
            };
            Ok(ClassSpectrum { id: pattern_id(&class.key), key: class.key, edges: class.edges, chi, degenerate })
        })
        .collect::<Result<_>>()?;
    Ok(SpectralReport { lambda, gamma, classes: results })
}

fn class_pair(
    embedding: &Embedding,
    conn: &Connections,
    a: usize,
    b: usize,
    field: f64,
    lambda: f64,
) -> Result<PairResult> {
    let shape_a = ChainShape::of_chain(&embedding.chains[a], &conn.within[a]);
    let shape_b = ChainShape::of_chain(&embedding.chains[b], &conn.within[b]);
    let pos = coupler_positions(embedding, conn, a, b);
    pair_jeff(&shape_a, &shape_b, &pos, field, 1.0, lambda, PROBE_FRACTION * lambda, Solver::Auto)
}

/// Per-edge spectral susceptibilities, in `instance.j` order.
pub fn edge_spectral_chi(
    instance: &Instance,
    embedding: &Embedding,
    graph: &PhysicalGraph,
    lambda: f64,
    gamma: f64,
) -> Result<(Vec<f64>, SpectralReport)> {
    let edges: Vec<(usize, usize)> = instance.j.iter().map(|&(a, b, _)| (a, b)).collect();
    let report = spectral_classes(embedding, graph, &edges, lambda, gamma)?;
    let mut by_edge = BTreeMap::new();
    for c in &report.classes {
        if c.degenerate || c.chi <= 0.0 {
            return Err(invalid(format!(
                "pattern {} has a degenerate two-chain spectrum; spectral compensation is undefined",
                c.id
            )));
        }
        for &e in &c.edges {
            by_edge.insert(e, c.chi);
        }
    }
    Ok((edges.iter().map(|e| by_edge[e]).collect(), report))
}

/// Compensated spreading with spectral susceptibilities: a single
/// linearized pass of `J_ab * N / chi_ab`, `N` their geometric mean.
pub fn spectral_compensate(
    instance: &Instance,
    embedding: &Embedding,
    graph: &PhysicalGraph,
    lambda: f64,
    gamma: f64,
) -> Result<PhysicalProblem> {
    let (chi, _) = edge_spectral_chi(instance, embedding, graph, lambda, gamma)?;
    let factors = crate::compile::normalized_factors(&chi);
    let mut problem = spread_with_factors(instance, embedding, graph, lambda, &factors)?;
    problem.provenance.compensation = Some(CompensationConfig::spectral(gamma));
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_qubit_gap_is_the_field() {
        let r = chain_gap(&ChainShape::path(1), 0.7, 1.0, 1.0, Solver::Dense).unwrap();
        assert_eq!(r.value, 0.7);
    }

    #[test]
    fn bare_qubits_pass_the_coupling() {
        let p = ChainShape::path(1);
        let r = pair_jeff(&p, &p, &[(0, 0)], 1.0, 1.0, 1.0, 0.01, Solver::Dense).unwrap();
        assert_eq!(r.chi, 1.0);
    }

    #[test]
    fn two_qubit_chain_gap() {
        let r = chain_gap(&ChainShape::path(2), 1.0, 1.0, 1.0, Solver::Dense).unwrap();
        assert!((r.value - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn sectors_match_full_space() {
        let s = TransverseIsing::new(5, vec![(0, 1, -1.0), (1, 2, 0.3), (2, 3, -0.7), (3, 4, 0.2), (0, 4, 0.5)], 0.8)
            .unwrap();
        let a = lowest_levels(&s, 6, Solver::Dense).unwrap();
        let b = lowest_levels_unreduced(&s, 6, Solver::Dense).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
