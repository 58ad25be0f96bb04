//! Dynamic graph node embeddings with in-training alignment.
//!
//! The crate splits a temporal edge list into snapshots, trains Node2Vec
//! embeddings per snapshot with an optional alignment regularizer that pulls
//! common nodes toward the previous snapshot's embedding, offers orthogonal
//! Procrustes post-hoc alignment as a baseline, aggregates snapshot
//! embeddings, and evaluates the result on last-snapshot link prediction.

pub mod aggregate;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod node2vec;
pub mod pipeline;
pub mod posthoc;
pub mod rafen;
pub mod scoring;
pub mod seed;
pub mod synthetic;

pub use embedding::EmbeddingMatrix;
pub use error::{Error, Result};
pub use graph::{NodeId, NodeSet, Snapshot, TemporalGraph};
