//! Shared fixtures for the kernel benchmarks.

use embedtune_core::compile::{compile, CompensationConfig, PhysicalProblem};
use embedtune_core::embedding::{embed_clique, Embedding};
use embedtune_core::instance::{gen_csg, Instance};
use embedtune_core::topology::{build_chimera, PhysicalGraph};

/// A clique instance embedded and compiled on an ideal graph just large
/// enough for it.
pub struct Fixture {
    pub graph: PhysicalGraph,
    pub instance: Instance,
    pub embedding: Embedding,
    pub problem: PhysicalProblem,
}

pub fn clique_fixture(n: usize, seed: u64) -> Fixture {
    let m = n.div_ceil(4);
    let graph = build_chimera(m, &[], &[]).expect("ideal graph");
    let instance = gen_csg(n, seed).expect("instance");
    let embedding = embed_clique(n, &graph).expect("embedding");
    let problem = compile(&instance, &embedding, &graph, 1.0, &CompensationConfig::default()).expect("compile");
    Fixture { graph, instance, embedding, problem }
}
