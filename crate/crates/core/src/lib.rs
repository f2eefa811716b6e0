//! Embedding-aware compilation of Ising problems onto Chimera hardware
//! graphs, with susceptibility-based coupling compensation, Monte Carlo
//! sampling, logical post-processing and the accompanying metrics.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compile;
pub mod embedding;
pub mod error;
pub mod formats;
pub mod instance;
pub mod metrics;
pub mod pipeline;
pub mod postprocess;
pub mod reference;
pub mod rng;
pub mod sampler;
pub mod spectral;
pub mod topology;

pub use compile::{compensate, compile, rescale, uniform_spread, CompensationConfig, Method, PhysicalProblem, Xi};
pub use embedding::{embed_biclique, embed_clique, embed_cubic, Embedding, EmbeddingSource};
pub use error::{Error, Result};
pub use instance::{Instance, ProblemKind, Spin};
pub use postprocess::LogicalSampleSet;
pub use sampler::remote::{RemoteError, RemoteSampler};
pub use sampler::{LocalSampler, SampleSet, Sampler, SamplerParams, Schedule};
pub use topology::{GraphSpec, PhysicalGraph, Qubit};
