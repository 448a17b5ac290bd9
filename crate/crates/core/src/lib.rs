//! Streaming Personalized PageRank tracking over dynamic weighted graphs,
//! with node-level and graph-level anomaly scores derived from the changes
//! in each tracked node's PageRank vector.

pub mod anomaly;
pub mod config;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod graph;
pub mod injection;
pub mod pipeline;
pub mod ppr;
pub mod sparse;
pub mod stream;

pub use error::{Error, Result};
pub use graph::{EdgeEvent, Graph, NodeId, NodeInterner};
pub use ppr::{PushParams, TrackerState};
pub use sparse::SparseVec;
