//! Node-level and graph-level anomaly scores.

use std::collections::HashMap;

use indexmap::IndexSet;

use crate::embedding::NodeRepresentation;
use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::sparse::SparseVec;

/// Default number of high-degree nodes added to the tracking list per snapshot.
pub const DEFAULT_TRACKING_CAPACITY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub node: NodeId,
    pub snapshot: u64,
    pub score: f64,
}

/// ℓp change between two consecutive representations of a node.
pub fn node_score(prev: &NodeRepresentation, cur: &NodeRepresentation, p_norm: u32) -> Result<f64> {
    prev.lp_distance(cur, p_norm)
}

/// One record per consecutive pair in each series. `snapshots[t]` labels the
/// t-th representation; records start from `snapshots[1]`.
pub fn node_score_series(
    reps: &[(NodeId, Vec<NodeRepresentation>)],
    snapshots: &[u64],
    p_norm: u32,
) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for (node, series) in reps {
        for (t, pair) in series.windows(2).enumerate() {
            out.push(ScoreRecord {
                node: *node,
                snapshot: snapshots[t + 1],
                score: node_score(&pair[0], &pair[1], p_norm)?,
            });
        }
    }
    Ok(out)
}

/// Append-only list of high-degree nodes watched for graph-level scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackingList {
    members: IndexSet<NodeId>,
    pub capacity_per_snapshot: usize,
}

impl TrackingList {
    pub fn new(capacity_per_snapshot: usize) -> Self {
        Self {
            members: IndexSet::new(),
            capacity_per_snapshot,
        }
    }

    pub fn members(&self) -> &IndexSet<NodeId> {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, u: NodeId) -> bool {
        self.members.contains(&u)
    }

    /// Unions in the current top nodes by degree and returns the newcomers.
    /// Ties go to the smaller node index; zero-degree nodes never qualify.
    pub fn update(&mut self, g: &Graph) -> Vec<NodeId> {
        let mut ranked: Vec<(NodeId, f64)> = g
            .degrees()
            .iter()
            .enumerate()
            .filter(|&(_, &d)| d > 0.0)
            .map(|(i, &d)| (NodeId(i as u32), d))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
            .into_iter()
            .take(self.capacity_per_snapshot)
            .filter(|&(u, _)| self.members.insert(u))
            .map(|(u, _)| u)
            .collect()
    }
}

/// Largest ℓ1 change of any tracked member's estimate between two snapshots.
/// Members missing from a map count as the zero vector.
pub fn graph_score(
    prev: &HashMap<NodeId, SparseVec>,
    cur: &HashMap<NodeId, SparseVec>,
    tracked: &TrackingList,
) -> f64 {
    let zero = SparseVec::new();
    tracked
        .members()
        .iter()
        .map(|s| {
            let a = prev.get(s).unwrap_or(&zero);
            let b = cur.get(s).unwrap_or(&zero);
            a.l1_distance(b)
        })
        .fold(0.0, f64::max)
}
