use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anomaly::DEFAULT_TRACKING_CAPACITY;
use crate::embedding::{HashPair, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::ppr::{PushParams, MIN_EPSILON};
use crate::stream::parse_node_list;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Node,
    Graph,
    Both,
}

impl ScoreMode {
    pub fn node(self) -> bool {
        matches!(self, Self::Node | Self::Both)
    }

    pub fn graph(self) -> bool {
        matches!(self, Self::Graph | Self::Both)
    }
}

/// Every parameter of a tracking run. Loadable from TOML; missing keys take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub epsilon: f64,
    /// Sparsification threshold; derived from the id space when absent.
    pub epsilon_c: Option<f64>,
    pub dim: usize,
    pub p_norm: u32,
    pub mode: ScoreMode,
    pub graph_topk: usize,
    pub undirected: bool,
    pub seed_bucket: u32,
    pub seed_sign: u32,
    pub seed_rng: u64,
    pub tracked_nodes: Vec<String>,
    pub tracked_file: Option<PathBuf>,
    pub force_hashed: bool,
    pub log_floor: bool,
    pub init_snapshot: u64,
    pub dump_representations: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            epsilon: MIN_EPSILON,
            epsilon_c: None,
            dim: DEFAULT_DIM,
            p_norm: 1,
            mode: ScoreMode::Node,
            graph_topk: DEFAULT_TRACKING_CAPACITY,
            undirected: false,
            seed_bucket: 0,
            seed_sign: 1,
            seed_rng: 0,
            tracked_nodes: Vec::new(),
            tracked_file: None,
            force_hashed: false,
            log_floor: true,
            init_snapshot: 0,
            dump_representations: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        PushParams::new(self.alpha, self.epsilon)?;
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if !matches!(self.p_norm, 1 | 2) {
            return Err(Error::Config(format!("p_norm must be 1 or 2, got {}", self.p_norm)));
        }
        if let Some(c) = self.epsilon_c {
            if !(c >= 0.0) {
                return Err(Error::Config(format!("epsilon_c must be non-negative, got {c}")));
            }
        }
        if self.mode.graph() && self.graph_topk == 0 {
            return Err(Error::Config("graph_topk must be positive".into()));
        }
        Ok(())
    }

    pub fn push_params(&self) -> Result<PushParams> {
        PushParams::new(self.alpha, self.epsilon)
    }

    pub fn hash_pair(&self) -> HashPair {
        HashPair::new(self.dim, self.seed_bucket, self.seed_sign)
    }

    /// Inline tracked nodes followed by those from `tracked_file`, deduplicated.
    pub fn resolve_tracked(&self) -> Result<Vec<String>> {
        let mut out = self.tracked_nodes.clone();
        if let Some(path) = &self.tracked_file {
            out.extend(parse_node_list(&std::fs::read_to_string(path)?));
        }
        let mut seen = std::collections::HashSet::new();
        out.retain(|n| seen.insert(n.clone()));
        Ok(out)
    }
}
