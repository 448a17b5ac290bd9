use thiserror::Error;

use crate::graph::NodeId;

/// Errors produced by the tracking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("negative weight: applying {delta} to edge ({src}, {dst}) with weight {current} would drive it below zero")]
    NegativeWeight {
        src: NodeId,
        dst: NodeId,
        current: f64,
        delta: f64,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("snapshot {snapshot}, event {index}: {source}")]
    AtEvent {
        snapshot: u64,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("representation mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("infeasible injection: {0}")]
    Infeasible(String),

    #[error("node {0} is labeled but has no score series")]
    MissingSeries(String),

    #[error("graph has {nodes} nodes, above the oracle cap of {cap}")]
    CapExceeded { nodes: usize, cap: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// The innermost error, skipping event-position wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtEvent { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
