//! From a logical instance and an embedding to programmable physical values.
//!
//! Pipeline: chain strength, then either uniform spreading or compensated
//! spreading of the logical couplings, then range rescaling. Chain couplers
//! are every physical coupler with both endpoints in one chain.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{chain_distances, validate, Connections, Embedding};
use crate::error::{invalid, Error, Result};
use crate::instance::{Instance, Spin};
use crate::topology::{GraphSpec, PhysicalGraph, Qubit};

/// Slack applied when checking the programmable ranges.
pub const RANGE_TOLERANCE: f64 = 1e-12;

/// Hardware limits after rescaling: chain couplers, other couplers, fields.
pub const CHAIN_RANGE: f64 = 2.0;
pub const COUPLER_RANGE: f64 = 1.0;
pub const FIELD_RANGE: f64 = 2.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    None,
    Susceptibility,
    Spectral,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "uniform" => Ok(Method::None),
            "susceptibility" | "chi" => Ok(Method::Susceptibility),
            "spectral" => Ok(Method::Spectral),
            other => Err(invalid(format!("unknown compensation method {other:?}"))),
        }
    }
}

/// Correlation length used by the susceptibility method.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Xi {
    /// Mean length of the two chains of each edge.
    #[default]
    ChainLength,
    Value(f64),
    Infinite,
}

impl Xi {
    pub fn resolve(&self, len_a: usize, len_b: usize) -> f64 {
        match *self {
            Xi::ChainLength => (len_a + len_b) as f64 / 2.0,
            Xi::Value(v) => v,
            Xi::Infinite => f64::INFINITY,
        }
    }

    /// Builds `xi` from its inverse; zero maps to infinity.
    pub fn from_inverse(inv: f64) -> Self {
        if inv == 0.0 {
            Xi::Infinite
        } else {
            Xi::Value(1.0 / inv)
        }
    }
}

impl fmt::Display for Xi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Xi::ChainLength => f.write_str("L"),
            Xi::Value(v) => write!(f, "{v}"),
            Xi::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Xi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "L" | "l" | "chain" => Ok(Xi::ChainLength),
            "inf" | "infinity" | "Inf" => Ok(Xi::Infinite),
            t => {
                let v: f64 = t.parse().map_err(|_| invalid(format!("bad xi {t:?}")))?;
                if v > 0.0 && v.is_finite() {
                    Ok(Xi::Value(v))
                } else if v == f64::INFINITY {
                    Ok(Xi::Infinite)
                } else {
                    Err(invalid(format!("xi must be positive, got {v}")))
                }
            }
        }
    }
}

impl Serialize for Xi {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Xi::Value(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Xi {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Xi::from_str(&v.to_string()).map_err(serde::de::Error::custom),
            Repr::Text(t) => Xi::from_str(&t).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensationConfig {
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub xi: Xi,
    /// Transverse-field ratio `A / (B lambda)` for the spectral method.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    1.0
}

impl Default for CompensationConfig {
    fn default() -> Self {
        CompensationConfig { method: Method::None, xi: Xi::ChainLength, gamma: 1.0 }
    }
}

impl CompensationConfig {
    pub fn susceptibility(xi: Xi) -> Self {
        CompensationConfig { method: Method::Susceptibility, xi, ..Default::default() }
    }

    pub fn spectral(gamma: f64) -> Self {
        CompensationConfig { method: Method::Spectral, gamma, ..Default::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compensation: Option<CompensationConfig>,
}

/// Programmed physical Ising problem.
///
/// `h` lists every embedded qubit (zero fields included) in ascending id
/// order; that order indexes sample vectors. `j` holds problem and chain
/// couplers, `a < b`, ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalProblem {
    pub graph: GraphSpec,
    pub h: Vec<(Qubit, f64)>,
    pub j: Vec<(Qubit, Qubit, f64)>,
    pub lambda: f64,
    #[serde(rename = "R")]
    pub rescale: f64,
    pub chain_couplers: Vec<(Qubit, Qubit)>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl PhysicalProblem {
    pub fn qubits(&self) -> Vec<Qubit> {
        self.h.iter().map(|&(q, _)| q).collect()
    }

    pub fn num_qubits(&self) -> usize {
        self.h.len()
    }

    /// Position of each qubit in sample vectors.
    pub fn index_of(&self) -> BTreeMap<Qubit, usize> {
        self.h.iter().enumerate().map(|(i, &(q, _))| (q, i)).collect()
    }

    /// Energy of a state indexed like `h`.
    pub fn energy(&self, z: &[Spin]) -> Result<f64> {
        if z.len() != self.h.len() {
            return Err(invalid(format!("state has {} spins, problem has {} qubits", z.len(), self.h.len())));
        }
        let idx = self.index_of();
        let mut e = 0.0;
        for &(a, b, v) in &self.j {
            e += v * (z[idx[&a]] * z[idx[&b]]) as f64;
        }
        for (&(_, hv), &s) in self.h.iter().zip(z) {
            e += hv * s as f64;
        }
        Ok(e)
    }

    pub fn is_chain_coupler(&self, a: Qubit, b: Qubit) -> bool {
        let key = (a.min(b), a.max(b));
        self.chain_couplers.binary_search(&key).is_ok()
    }

    /// Largest magnitudes `(chain, other couplers, fields)` of the stored values.
    pub fn magnitudes(&self) -> (f64, f64, f64) {
        let (mut chain, mut other) = (0f64, 0f64);
        for &(a, b, v) in &self.j {
            if self.is_chain_coupler(a, b) {
                chain = chain.max(v.abs());
            } else {
                other = other.max(v.abs());
            }
        }
        let field = self.h.iter().fold(0f64, |m, &(_, v)| m.max(v.abs()));
        (chain, other, field)
    }

    /// Checks the programmable ranges; every violation is listed.
    pub fn check_ranges(&self) -> Result<()> {
        let (chain, other, field) = self.magnitudes();
        let mut errs = Vec::new();
        if chain > CHAIN_RANGE + RANGE_TOLERANCE {
            errs.push(format!("chain coupler magnitude {chain} exceeds {CHAIN_RANGE}"));
        }
        if other > COUPLER_RANGE + RANGE_TOLERANCE {
            errs.push(format!("coupler magnitude {other} exceeds {COUPLER_RANGE}"));
        }
        if field > FIELD_RANGE + RANGE_TOLERANCE {
            errs.push(format!("field magnitude {field} exceeds {FIELD_RANGE}"));
        }
        for &(a, b, v) in &self.j {
            if self.is_chain_coupler(a, b) && v > 0.0 {
                errs.push(format!("chain coupler ({a}, {b}) is not ferromagnetic"));
                break;
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Range(errs.join("; ")))
        }
    }
}

/// `lambda = lambda0 * sqrt(sigma^2 N)` with `sigma^2` the mean squared
/// coupling over all pairs.
pub fn chain_strength(instance: &Instance, lambda0: f64) -> Result<f64> {
    if !(lambda0 > 0.0) {
        return Err(invalid("lambda0 must be positive"));
    }
    if instance.n < 2 {
        return Err(invalid("chain strength needs n >= 2"));
    }
    Ok(lambda0 * (instance.coupling_variance() * instance.n as f64).sqrt())
}

fn checked_connections(instance: &Instance, embedding: &Embedding, graph: &PhysicalGraph) -> Result<Connections> {
    validate(embedding, instance, graph).into_result()?;
    Ok(embedding.connections(graph))
}

/// Spreads fields over chains and `J_ab * factor(edge)` over connecting
/// couplers; chain couplers get `-lambda`.
fn spread(
    instance: &Instance,
    embedding: &Embedding,
    graph: &PhysicalGraph,
    conn: &Connections,
    lambda: f64,
    factors: Option<&[f64]>,
) -> PhysicalProblem {
    let mut h = Vec::with_capacity(embedding.num_qubits());
    for (a, chain) in embedding.chains.iter().enumerate() {
        let share = instance.h[a] / chain.len() as f64;
        h.extend(chain.iter().map(|&q| (q, share)));
    }
    h.sort_by_key(|&(q, _)| q);

    let mut j = Vec::new();
    for (e, &(a, b, v)) in instance.j.iter().enumerate() {
        let couplers = conn.couplers(a, b);
        let logical = match factors {
            Some(f) => v * f[e],
            None => v,
        };
        let per = logical / couplers.len() as f64;
        j.extend(couplers.iter().map(|&(p, q)| (p.min(q), p.max(q), per)));
    }
    let mut chain_couplers: Vec<(Qubit, Qubit)> =
        conn.within.iter().flatten().map(|&(p, q)| (p.min(q), p.max(q))).collect();
    chain_couplers.sort_unstable();
    j.extend(chain_couplers.iter().map(|&(p, q)| (p, q, -lambda)));
    j.sort_by_key(|&(p, q, _)| (p, q));

    PhysicalProblem {
        graph: graph.spec(),
        h,
        j,
        lambda,
        rescale: 1.0,
        chain_couplers,
        provenance: Provenance::default(),
    }
}

/// Uniform spreading: `h_a / |C_a|` per chain qubit, `J_ab / count` per
/// connecting coupler, `-lambda` per chain coupler. Not yet rescaled.
pub fn uniform_spread(
    instance: &Instance,
    embedding: &Embedding,
    graph: &PhysicalGraph,
    lambda: f64,
) -> Result<PhysicalProblem> {
    let conn = checked_connections(instance, embedding, graph)?;
    let mut p = spread(instance, embedding, graph, &conn, lambda, None);
    p.provenance.compensation = Some(CompensationConfig::default());
    Ok(p)
}

/// Within-chain distances by path position; fails on disconnected chains.
pub fn chain_metric(graph: &PhysicalGraph, chain: &[Qubit]) -> Result<Vec<Vec<usize>>> {
    chain_distances(graph, chain)
        .into_iter()
        .map(|row| row.into_iter().collect::<Option<Vec<usize>>>().ok_or_else(|| invalid("chain is not connected")))
        .collect()
}

/// Single-chain susceptibility at position `i`:
/// `exp(-sum_j d(i, j) / (xi |C|))`.
pub fn chain_susceptibility(dist: &[Vec<usize>], i: usize, xi: f64) -> f64 {
    let total: usize = dist[i].iter().sum();
    (-(total as f64) / (xi * dist.len() as f64)).exp()
}

/// Pair susceptibility from chain metrics and connecting-coupler positions:
/// the geometric mean over `(i, j)` of the coupler-averaged decay
/// `exp(-(d_a(i, i') + d_b(j, j')) / xi)`.
pub fn chi_from_positions(dist_a: &[Vec<usize>], dist_b: &[Vec<usize>], couplers: &[(usize, usize)], xi: f64) -> f64 {
    if couplers.is_empty() {
        return 0.0;
    }
    let k = couplers.len() as f64;
    let mut log_sum = 0.0;
    for row_a in dist_a {
        for row_b in dist_b {
            let s: f64 = couplers.iter().map(|&(p, q)| (-((row_a[p] + row_b[q]) as f64) / xi).exp()).sum();
            log_sum += (s / k).ln();
        }
    }
    (log_sum / (dist_a.len() * dist_b.len()) as f64).exp()
}

/// Summed single-chain form `sum over couplers of chi_a^i chi_b^j`. Equal to
/// `chi_from_positions` for one coupler; differs when there are several.
pub fn chi_summed(dist_a: &[Vec<usize>], dist_b: &[Vec<usize>], couplers: &[(usize, usize)], xi: f64) -> f64 {
    couplers.iter().map(|&(p, q)| chain_susceptibility(dist_a, p, xi) * chain_susceptibility(dist_b, q, xi)).sum()
}

/// Connecting couplers of chains `a` and `b` as `(position in a, position in b)`.
pub fn coupler_positions(embedding: &Embedding, conn: &Connections, a: usize, b: usize) -> Vec<(usize, usize)> {
    let pos = |chain: usize, q: Qubit| {
        embedding.chains[chain].iter().position(|&x| x == q).expect("coupler endpoint is in its chain")
    };
    let (lo, hi) = (a.min(b), a.max(b));
    conn.couplers(lo, hi)
        .iter()
        .map(|&(p, q)| if a == lo { (pos(lo, p), pos(hi, q)) } else { (pos(hi, q), pos(lo, p)) })
        .collect()
}

/// Pairwise susceptibility of chains `a` and `b` at correlation length `xi`
/// (positive or infinite).
pub fn chi_pair(embedding: &Embedding, graph: &PhysicalGraph, a: usize, b: usize, xi: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(invalid("xi must be positive"));
    }
    if a >= embedding.len() || b >= embedding.len() || a == b {
        return Err(invalid(format!("bad chain pair ({a}, {b})")));
    }
    let conn = embedding.connections(graph);
    let couplers = coupler_positions(embedding, &conn, a, b);
    if couplers.is_empty() {
        return Err(invalid(format!("chains {a} and {b} share no coupler")));
    }
    let da = chain_metric(graph, &embedding.chains[a])?;
    let db = chain_metric(graph, &embedding.chains[b])?;
    Ok(chi_from_positions(&da, &db, &couplers, xi))
}

/// `N / chi_ab` per logical edge, `N` the geometric mean of `chi` over the
/// edges. Computed in log space so identical `chi` give factors of exactly 1.
pub fn normalized_factors(chi: &[f64]) -> Vec<f64> {
    if chi.is_empty() {
        return Vec::new();
    }
    let logs: Vec<f64> = chi.iter().map(|c| c.ln()).collect();
    let mean = if logs.iter().all(|&l| l == logs[0]) { logs[0] } else { logs.iter().sum::<f64>() / logs.len() as f64 };
    logs.iter().map(|&l| (mean - l).exp()).collect()
}

/// Pair susceptibility of every nonzero logical coupling, in `instance.j` order.
pub fn edge_susceptibilities(
    instance: &Instance,
    embedding: &Embedding,
    graph: &PhysicalGraph,
    xi: Xi,
) -> Result<Vec<f64>> {
    let conn = checked_connections(instance, embedding, graph)?;
    let metrics: Vec<Vec<Vec<usize>>> =
        embedding.chains.iter().map(|c| chain_metric(graph, c)).collect::<Result<_>>()?;
    Ok(instance
        .j
        .par_iter()
        .map(|&(a, b, _)| {
            let pos = coupler_positions(embedding, &conn, a, b);
            let x = xi.resolve(embedding.chains[a].len(), embedding.chains[b].len());
            chi_from_positions(&metrics[a], &metrics[b], &pos, x)
        })
        .collect())
}

/// Compensated spreading: `J_ab * N / chi_ab` spread uniformly over the
/// connecting couplers. Fields are spread as in `uniform_spread`.
pub fn compensate(
    instance: &Instance,
    embedding: &Embedding,
    graph: &PhysicalGraph,
    lambda: f64,
    config: &CompensationConfig,
) -> Result<PhysicalProblem> {
    let mut problem = match config.method {
        Method::None => uniform_spread(instance, embedding, graph, lambda)?,
        Method::Susceptibility => {
            let chi = edge_susceptibilities(instance, embedding, graph, config.xi)?;
            let factors = normalized_factors(&chi);
            let conn = embedding.connections(graph);
            spread(instance, embedding, graph, &conn, lambda, Some(&factors))
        }
        Method::Spectral => {
            return crate::spectral::spectral_compensate(instance, embedding, graph, lambda, config.gamma)
        }
    };
    problem.provenance.compensation = Some(*config);
    Ok(problem)
}

/// Applies externally computed per-edge factors (in `instance.j` order).
pub fn spread_with_factors(
    instance: &Instance,
    embedding: &Embedding,
    graph: &PhysicalGraph,
    lambda: f64,
    factors: &[f64],
) -> Result<PhysicalProblem> {
    if factors.len() != instance.j.len() {
        return Err(invalid("one factor per logical coupling is required"));
    }
    let conn = checked_connections(instance, embedding, graph)?;
    Ok(spread(instance, embedding, graph, &conn, lambda, Some(factors)))
}

/// Scales every programmed value by the largest `R` that keeps chain
/// couplers within 2, other couplers within 1 and fields within 2.
pub fn rescale(problem: &PhysicalProblem) -> Result<PhysicalProblem> {
    let (chain, other, field) = problem.magnitudes();
    let bounds = [(chain, CHAIN_RANGE), (other, COUPLER_RANGE), (field, FIELD_RANGE)];
    let r = bounds.iter().filter(|(m, _)| *m > 0.0).map(|(m, cap)| cap / m).fold(f64::INFINITY, f64::min);
    if !r.is_finite() {
        return Err(invalid("all-zero problem has no defined rescale factor"));
    }
    let mut out = problem.clone();
    for t in &mut out.h {
        t.1 *= r;
    }
    for t in &mut out.j {
        t.2 *= r;
    }
    out.rescale *= r;
    Ok(out)
}

/// Chain strength, compensation and rescaling in one call.
pub fn compile(
    instance: &Instance,
    embedding: &Embedding,
    graph: &PhysicalGraph,
    lambda: f64,
    config: &CompensationConfig,
) -> Result<PhysicalProblem> {
    rescale(&compensate(instance, embedding, graph, lambda, config)?)
}

/// Physical state with every chain set to its logical spin.
pub fn aligned_state(problem: &PhysicalProblem, embedding: &Embedding, x: &[Spin]) -> Vec<Spin> {
    let idx = problem.index_of();
    let mut z = vec![1; problem.num_qubits()];
    for (chain, &s) in embedding.chains.iter().zip(x) {
        for q in chain {
            z[idx[q]] = s;
        }
    }
    z
}
