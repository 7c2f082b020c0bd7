//! Graph-based Sybil detection by local-rule propagation.
//!
//! The crate bundles a CSR graph type with edge-list I/O, synthetic attack
//! generators, label and prior handling, a family of propagation engines
//! (SybilSCAR with constant or degree-normalized weights, SybilRank, CIA,
//! SybilBelief, and a multiplicative reference rule), convergence and
//! security analysis, and evaluation drivers.

pub mod analysis;
pub mod engines;
pub mod error;
pub mod eval;
pub mod graph;
pub mod labels;
pub mod rng;
pub mod synth;

pub use graph::{Graph, NodeId};
