//! Logical Ising problems and their generators.
//!
//! Energies follow `H(x) = sum_{a<b} J_ab x_a x_b + sum_a h_a x_a + offset`.
//! The offset is zero for the spin-glass ensembles. For CDMA it holds the
//! constant of the expanded likelihood, so `h` and `J` are the constant-free
//! quadratic form while `energy` is the full negative log-likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{self, Purpose};

pub type Spin = i8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    #[serde(rename = "csg")]
    Clique,
    #[serde(rename = "bsg")]
    Biclique,
    #[serde(rename = "3dsg")]
    Cubic,
    #[serde(rename = "cdma")]
    Cdma,
}

impl std::str::FromStr for ProblemKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csg" | "clique" => Ok(Self::Clique),
            "bsg" | "biclique" => Ok(Self::Biclique),
            "3dsg" | "cubic" => Ok(Self::Cubic),
            "cdma" => Ok(Self::Cdma),
            other => Err(invalid(format!("unknown problem kind {other:?}"))),
        }
    }
}

/// Channel data kept alongside a CDMA instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdmaPayload {
    pub load: f64,
    pub snr_db: f64,
    pub sigma0: f64,
    pub bits: Vec<Spin>,
    /// Code matrix, one row per chip (`M` rows of length `n`).
    pub code: Vec<Vec<f64>>,
    pub received: Vec<f64>,
    pub noise: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vacancies {
    #[serde(default)]
    pub sites: Vec<usize>,
    #[serde(default)]
    pub edges: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub kind: ProblemKind,
    pub n: usize,
    pub seed: u64,
    pub h: Vec<f64>,
    /// Couplings `(a, b, J_ab)` with `a < b`, sorted, no zero entries.
    pub j: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
    pub target_energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdma: Option<CdmaPayload>,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl Instance {
    /// Builds an instance from raw terms, normalizing pair order and
    /// dropping zero couplings.
    pub fn from_terms(kind: ProblemKind, h: Vec<f64>, terms: &[(usize, usize, f64)]) -> Result<Self> {
        let n = h.len();
        let mut j = Vec::with_capacity(terms.len());
        for &(a, b, v) in terms {
            if a == b || a >= n || b >= n {
                return Err(invalid(format!("coupling ({a}, {b}) invalid for n = {n}")));
            }
            if v != 0.0 {
                j.push((a.min(b), a.max(b), v));
            }
        }
        j.sort_by_key(|&(a, b, _)| (a, b));
        if j.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(invalid("duplicate coupling"));
        }
        Ok(Instance { kind, n, seed: 0, h, j, offset: 0.0, target_energy: None, lattice: None, cdma: None })
    }

    pub fn energy(&self, x: &[Spin]) -> Result<f64> {
        if x.len() != self.n {
            return Err(invalid(format!("state has {} spins, instance has {}", x.len(), self.n)));
        }
        Ok(self.energy_unchecked(x))
    }

    pub fn energy_unchecked(&self, x: &[Spin]) -> f64 {
        let mut e = self.offset;
        for &(a, b, v) in &self.j {
            e += v * (x[a] * x[b]) as f64;
        }
        for (hv, &s) in self.h.iter().zip(x) {
            e += hv * s as f64;
        }
        e
    }

    pub fn has_fields(&self) -> bool {
        self.h.iter().any(|&v| v != 0.0)
    }

    /// Symmetric neighbor lists `(b, J_ab)`.
    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b, v) in &self.j {
            adj[a].push((b, v));
            adj[b].push((a, v));
        }
        adj
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.j.iter().map(|&(a, b, _)| (a, b)).collect()
    }

    /// Mean squared coupling over all `n(n-1)/2` pairs, zeros included.
    pub fn coupling_variance(&self) -> f64 {
        let pairs = (self.n * (self.n - 1)) as f64 / 2.0;
        self.j.iter().map(|&(_, _, v)| v * v).sum::<f64>() / pairs
    }
}

fn signed_couplings(edges: &[(usize, usize)], seed: u64) -> Vec<(usize, usize, f64)> {
    let mut rng = rng::stream(seed, Purpose::Couplings, 0);
    edges.iter().map(|&(a, b)| (a, b, rng::spin(&mut rng) as f64)).collect()
}

fn spin_glass(kind: ProblemKind, n: usize, edges: &[(usize, usize)], seed: u64) -> Instance {
    let mut inst =
        Instance::from_terms(kind, vec![0.0; n], &signed_couplings(edges, seed)).expect("generator edges are valid");
    inst.seed = seed;
    inst
}

/// Clique spin glass: every pair coupled `+-1`. Pairs draw signs in
/// lexicographic order.
pub fn gen_csg(n: usize, seed: u64) -> Result<Instance> {
    if n < 2 {
        return Err(invalid("clique spin glass needs n >= 2"));
    }
    let edges: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    Ok(spin_glass(ProblemKind::Clique, n, &edges, seed))
}

/// Biclique spin glass on sides `0..n/2` and `n/2..n`.
pub fn gen_bsg(n: usize, seed: u64) -> Result<Instance> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(invalid(format!("biclique spin glass needs even n >= 2, got {n}")));
    }
    let half = n / 2;
    let edges: Vec<_> = (0..half).flat_map(|a| (half..n).map(move |b| (a, b))).collect();
    Ok(spin_glass(ProblemKind::Biclique, n, &edges, seed))
}

/// Variable index of lattice site `(x, y, z)`.
pub fn lattice_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    (x * dims[1] + y) * dims[2] + z
}

/// Open-boundary nearest-neighbor edges, ordered by site then by axis.
pub fn lattice_edges(dims: [usize; 3]) -> Vec<(usize, usize)> {
    let [lx, ly, lz] = dims;
    let mut edges = Vec::new();
    for x in 0..lx {
        for y in 0..ly {
            for z in 0..lz {
                let v = lattice_index(dims, x, y, z);
                if x + 1 < lx {
                    edges.push((v, lattice_index(dims, x + 1, y, z)));
                }
                if y + 1 < ly {
                    edges.push((v, lattice_index(dims, x, y + 1, z)));
                }
                if z + 1 < lz {
                    edges.push((v, lattice_index(dims, x, y, z + 1)));
                }
            }
        }
    }
    edges
}

/// Cubic-lattice spin glass. Signs are drawn for every ideal edge before
/// vacancies are applied, so vacancies never shift the remaining draws.
/// A vacant site keeps its index but loses all its couplings.
pub fn gen_3dsg(dims: [usize; 3], seed: u64, vacancies: Option<&Vacancies>) -> Result<Instance> {
    if dims.contains(&0) {
        return Err(invalid("lattice dimensions must be at least 1"));
    }
    let n = dims.iter().product::<usize>();
    let edges = lattice_edges(dims);
    let mut terms = signed_couplings(&edges, seed);
    if let Some(vac) = vacancies {
        if let Some(&s) = vac.sites.iter().find(|&&s| s >= n) {
            return Err(invalid(format!("vacancy site {s} outside lattice of {n} sites")));
        }
        let dead_edges: Vec<(usize, usize)> = vac.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        terms.retain(|&(a, b, _)| !vac.sites.contains(&a) && !vac.sites.contains(&b) && !dead_edges.contains(&(a, b)));
    }
    let mut inst = Instance::from_terms(ProblemKind::Cubic, vec![0.0; n], &terms)?;
    inst.seed = seed;
    inst.lattice = Some(dims);
    Ok(inst)
}

pub fn cdma_sigma0_sq(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0) / 2.0
}

pub fn cdma_rows(n: usize, load: f64) -> usize {
    (load * n as f64).round() as usize
}

/// CDMA maximum-likelihood decoding as an Ising problem.
///
/// `H(x) = (1 / 2 s0^2) sum_mu (y_mu - sum_i W_mu,i x_i)^2`, expanded to
/// `J_ij = (1/s0^2) sum_mu W_mu,i W_mu,j` and `h_i = -(1/s0^2) sum_mu y_mu W_mu,i`.
/// Streams: code matrix row-major, then bits, then noise.
pub fn gen_cdma(n: usize, load: f64, snr_db: f64, seed: u64) -> Result<Instance> {
    if n < 2 {
        return Err(invalid("CDMA needs n >= 2"));
    }
    if !(load > 0.0) || !snr_db.is_finite() {
        return Err(invalid("CDMA needs load > 0 and finite SNR"));
    }
    let rows = cdma_rows(n, load);
    if rows == 0 {
        return Err(invalid("CDMA load rounds to zero chips"));
    }
    let amp = 1.0 / (n as f64).sqrt();
    let mut code_rng = rng::stream(seed, Purpose::CdmaCode, 0);
    let code: Vec<Vec<f64>> =
        (0..rows).map(|_| (0..n).map(|_| amp * rng::spin(&mut code_rng) as f64).collect()).collect();
    let mut bit_rng = rng::stream(seed, Purpose::CdmaBits, 0);
    let bits: Vec<Spin> = (0..n).map(|_| rng::spin(&mut bit_rng)).collect();
    let mut noise_rng = rng::stream(seed, Purpose::CdmaNoise, 0);
    let noise: Vec<f64> = (0..rows).map(|_| rng::normal(&mut noise_rng)).collect();

    let s0sq = cdma_sigma0_sq(snr_db);
    let sigma0 = s0sq.sqrt();
    let received: Vec<f64> = code
        .iter()
        .zip(&noise)
        .map(|(row, nz)| row.iter().zip(&bits).map(|(w, &b)| w * b as f64).sum::<f64>() + sigma0 * nz)
        .collect();

    let mut h = vec![0.0; n];
    for (row, y) in code.iter().zip(&received) {
        for (hi, w) in h.iter_mut().zip(row) {
            *hi -= y * w;
        }
    }
    for hi in &mut h {
        *hi /= s0sq;
    }
    let mut terms = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            let s: f64 = code.iter().map(|row| row[a] * row[b]).sum();
            terms.push((a, b, s / s0sq));
        }
    }
    let constant = received.iter().map(|y| y * y).sum::<f64>() + code.iter().flatten().map(|w| w * w).sum::<f64>();

    let mut inst = Instance::from_terms(ProblemKind::Cdma, h, &terms)?;
    inst.seed = seed;
    inst.offset = constant / (2.0 * s0sq);
    inst.target_energy = Some(inst.energy_unchecked(&bits));
    inst.cdma = Some(CdmaPayload { load, snr_db, sigma0, bits, code, received, noise });
    Ok(inst)
}
