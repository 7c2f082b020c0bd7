use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Read {
        line: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected two integer node ids, got {content:?}")]
    Malformed { line: usize, content: String },
    #[error("edge list contains no edges")]
    Empty,
    #[error("node {node} out of range for a graph with {node_count} nodes")]
    NodeOutOfRange { node: u64, node_count: usize },
}

impl GraphError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        GraphError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("{requested} attack edges requested but only {available} cross-region pairs exist")]
    TooManyAttackEdges { requested: usize, available: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("cannot sample {requested} nodes from {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("training set has no {0} nodes")]
    EmptySide(&'static str),
    #[error("node {node} out of range for {node_count} nodes")]
    NodeOutOfRange { node: u64, node_count: usize },
    #[error("node {0} is labeled both benign and sybil")]
    Conflict(u32),
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("no {0} seeds to start the random walk from")]
    EmptySeedSet(&'static str),
    #[error("invalid engine parameter: {0}")]
    InvalidConfig(String),
    #[error("vector has length {got}, graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Labels(#[from] LabelError),
}

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("graph has no edges")]
    Edgeless,
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("sybil region is empty")]
    EmptySybilRegion,
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Labels(#[from] LabelError),
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("AUC needs at least one sybil and one benign test node ({n_pos} sybil, {n_neg} benign)")]
    EmptyClass { n_pos: usize, n_neg: usize },
    #[error("score vector has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid top-k request: {0}")]
    InvalidTopK(String),
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
