//! Chimera hardware graphs.
//!
//! `C_m` is an `m x m` grid of cells. Each cell holds two shores of four
//! qubits, horizontal (shore 0) and vertical (shore 1), joined as `K_{4,4}`.
//! Vertical qubits couple to the same index in the cell below; horizontal
//! qubits couple to the same index in the cell to the right.
//!
//! Qubit ids are `((row * m + col) * 2 + shore) * 4 + index`.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Qubit = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shore {
    Horizontal = 0,
    Vertical = 1,
}

/// Cell-level address of a qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Site {
    pub row: usize,
    pub col: usize,
    pub shore: Shore,
    pub index: usize,
}

/// The triple a graph is rebuilt from; this is also its JSON form.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub m: usize,
    #[serde(default)]
    pub defect_qubits: Vec<Qubit>,
    #[serde(default)]
    pub defect_couplers: Vec<(Qubit, Qubit)>,
}

/// Immutable Chimera graph with defects removed.
#[derive(Clone, Debug)]
pub struct PhysicalGraph {
    m: usize,
    live: Vec<bool>,
    adjacency: Vec<Vec<Qubit>>,
    couplers: BTreeSet<(Qubit, Qubit)>,
    defect_qubits: BTreeSet<Qubit>,
    defect_couplers: BTreeSet<(Qubit, Qubit)>,
}

pub fn qubit_id(m: usize, site: Site) -> Qubit {
    (((site.row * m + site.col) * 2 + site.shore as usize) * 4 + site.index) as Qubit
}

pub fn site_of(m: usize, q: Qubit) -> Site {
    let q = q as usize;
    let index = q % 4;
    let shore = if (q / 4).is_multiple_of(2) { Shore::Horizontal } else { Shore::Vertical };
    let cell = q / 8;
    Site { row: cell / m, col: cell % m, shore, index }
}

fn ordered(a: Qubit, b: Qubit) -> (Qubit, Qubit) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// All couplers of the defect-free `C_m`, each with the smaller id first.
pub fn ideal_couplers(m: usize) -> Vec<(Qubit, Qubit)> {
    let mut out = Vec::with_capacity(16 * m * m + 8 * m * m.saturating_sub(1));
    let id = |row, col, shore, index| qubit_id(m, Site { row, col, shore, index });
    for row in 0..m {
        for col in 0..m {
            for a in 0..4 {
                for b in 0..4 {
                    out.push(ordered(id(row, col, Shore::Horizontal, a), id(row, col, Shore::Vertical, b)));
                }
            }
            for k in 0..4 {
                if row + 1 < m {
                    out.push(ordered(id(row, col, Shore::Vertical, k), id(row + 1, col, Shore::Vertical, k)));
                }
                if col + 1 < m {
                    out.push(ordered(id(row, col, Shore::Horizontal, k), id(row, col + 1, Shore::Horizontal, k)));
                }
            }
        }
    }
    out
}

pub fn build_chimera(m: usize, defect_qubits: &[Qubit], defect_couplers: &[(Qubit, Qubit)]) -> Result<PhysicalGraph> {
    if m == 0 {
        return Err(invalid("grid size m must be at least 1"));
    }
    let total = 8 * m * m;
    let ideal = ideal_couplers(m);
    let ideal_set: BTreeSet<_> = ideal.iter().copied().collect();

    let mut live = vec![true; total];
    for &q in defect_qubits {
        if q as usize >= total {
            return Err(invalid(format!("defect qubit {q} outside C_{m} (0..{total})")));
        }
        live[q as usize] = false;
    }
    let mut dead_couplers = BTreeSet::new();
    for &(a, b) in defect_couplers {
        let key = ordered(a, b);
        if !ideal_set.contains(&key) {
            return Err(invalid(format!("defect coupler ({a}, {b}) is not a C_{m} coupler")));
        }
        dead_couplers.insert(key);
    }

    let mut adjacency = vec![Vec::new(); total];
    let mut couplers = BTreeSet::new();
    for (a, b) in ideal {
        if live[a as usize] && live[b as usize] && !dead_couplers.contains(&(a, b)) {
            couplers.insert((a, b));
            adjacency[a as usize].push(b);
            adjacency[b as usize].push(a);
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    Ok(PhysicalGraph {
        m,
        live,
        adjacency,
        couplers,
        defect_qubits: defect_qubits.iter().copied().collect(),
        defect_couplers: dead_couplers,
    })
}

impl PhysicalGraph {
    pub fn from_spec(spec: &GraphSpec) -> Result<Self> {
        build_chimera(spec.m, &spec.defect_qubits, &spec.defect_couplers)
    }

    pub fn spec(&self) -> GraphSpec {
        GraphSpec {
            m: self.m,
            defect_qubits: self.defect_qubits.iter().copied().collect(),
            defect_couplers: self.defect_couplers.iter().copied().collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Size of the id space, `8 m^2`, including defective ids.
    pub fn id_space(&self) -> usize {
        self.live.len()
    }

    pub fn is_live(&self, q: Qubit) -> bool {
        self.live.get(q as usize).copied().unwrap_or(false)
    }

    pub fn qubits(&self) -> impl Iterator<Item = Qubit> + '_ {
        self.live.iter().enumerate().filter(|(_, &l)| l).map(|(q, _)| q as Qubit)
    }

    pub fn num_qubits(&self) -> usize {
        self.live.iter().filter(|&&l| l).count()
    }

    pub fn couplers(&self) -> impl Iterator<Item = (Qubit, Qubit)> + '_ {
        self.couplers.iter().copied()
    }

    pub fn num_couplers(&self) -> usize {
        self.couplers.len()
    }

    pub fn has_coupler(&self, a: Qubit, b: Qubit) -> bool {
        self.couplers.contains(&ordered(a, b))
    }

    pub fn neighbors(&self, q: Qubit) -> &[Qubit] {
        self.adjacency.get(q as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn site(&self, q: Qubit) -> Site {
        site_of(self.m, q)
    }

    pub fn qubit(&self, row: usize, col: usize, shore: Shore, index: usize) -> Qubit {
        qubit_id(self.m, Site { row, col, shore, index })
    }
}

/// Breadth-first distances from `source` within the subgraph induced on
/// `subset`. Entries are in `subset` order; `None` marks unreachable qubits.
pub fn distances_within(graph: &PhysicalGraph, subset: &[Qubit], source: Qubit) -> Result<Vec<Option<usize>>> {
    let position = |q: Qubit| subset.iter().position(|&s| s == q);
    let start = position(source).ok_or_else(|| invalid(format!("qubit {source} is not in the subset")))?;
    let mut dist = vec![None; subset.len()];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        let d = dist[i].unwrap_or(0);
        for &nb in graph.neighbors(subset[i]) {
            if let Some(j) = position(nb) {
                if dist[j].is_none() {
                    dist[j] = Some(d + 1);
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(dist)
}

/// Shortest-path length between `i` and `j` inside the induced subgraph on
/// `subset`; `None` when they are disconnected.
pub fn subgraph_distance(graph: &PhysicalGraph, subset: &[Qubit], i: Qubit, j: Qubit) -> Result<Option<usize>> {
    let target =
        subset.iter().position(|&s| s == j).ok_or_else(|| invalid(format!("qubit {j} is not in the subset")))?;
    Ok(distances_within(graph, subset, i)?[target])
}
