//! Directed graph embedding that preserves asymmetric transitivity.
//!
//! The pipeline breaks cycles with a hierarchy-aware edge vote, assigns
//! integer levels on the resulting DAG, turns the level differences of every
//! reachable pair into a proximity matrix, and factorizes that matrix into
//! non-negative source and target vectors per node.

// `!(x >= 0.0)` is how parameter checks reject NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cqa;
pub mod cycles;
pub mod error;
pub mod factorization;
pub mod graph;
pub mod hierarchy;
pub mod linkpred;
pub mod pipeline;
pub mod proximity;
pub mod scalar;
pub mod synthetic;

pub use error::{Error, Result};
pub use graph::{DirectedGraph, NodeId};
pub use scalar::Scalar;

pub type EmbeddingModel = factorization::EmbeddingModel<f64>;
pub type EmbeddingModel32 = factorization::EmbeddingModel<f32>;
pub type ProximityMatrix = proximity::ProximityMatrix<f64>;
pub type ProximityMatrix32 = proximity::ProximityMatrix<f32>;
pub type FactorizationConfig = factorization::FactorizationConfig<f64>;
