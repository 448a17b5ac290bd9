//! Dynamic weighted directed graph with generalized out-degrees.
//!
//! Parallel edges are folded into a single weighted edge. Node ids are
//! dense indices handed out by a [`NodeInterner`]; the interner is
//! append-only so an index never changes meaning during a run.

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// Weights with magnitude at or below this are treated as zero.
pub const ZERO_WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Append-only mapping between external string ids and dense indices.
#[derive(Debug, Clone, Default)]
pub struct NodeInterner {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
}

impl NodeInterner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = NodeId(self.names.len() as u32);
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len() as u32).map(NodeId)
    }
}

/// A single stream operation on the weight of edge `(src, dst)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeEvent {
    pub src: NodeId,
    pub dst: NodeId,
    pub delta: f64,
    pub snapshot: u64,
}

impl EdgeEvent {
    pub fn new(src: NodeId, dst: NodeId, delta: f64, snapshot: u64) -> Self {
        Self {
            src,
            dst,
            delta,
            snapshot,
        }
    }
}

/// Follow every event by its reverse, turning a directed stream into an
/// undirected one.
pub fn mirror_stream(events: &[EdgeEvent]) -> Vec<EdgeEvent> {
    let mut out = Vec::with_capacity(events.len() * 2);
    for e in events {
        out.push(*e);
        out.push(EdgeEvent {
            src: e.dst,
            dst: e.src,
            ..*e
        });
    }
    out
}

/// Adjacency (out and in) plus the generalized out-degree vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Graph {
    out_edges: Vec<IndexMap<NodeId, f64>>,
    // Mirrors `out_edges`; only read by invariant checks.
    in_edges: Vec<IndexMap<NodeId, f64>>,
    degree: Vec<f64>,
    edge_event_count: usize,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_nodes(n: usize) -> Self {
        let mut g = Self::new();
        g.ensure_node_count(n);
        g
    }

    /// Build a graph by applying `events` in order.
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a EdgeEvent>) -> Result<Self> {
        let mut g = Self::new();
        for e in events {
            g.apply_event(e)?;
        }
        Ok(g)
    }

    pub fn ensure_node_count(&mut self, n: usize) {
        if n > self.degree.len() {
            self.out_edges.resize_with(n, IndexMap::new);
            self.in_edges.resize_with(n, IndexMap::new);
            self.degree.resize(n, 0.0);
        }
    }

    pub fn node_count(&self) -> usize {
        self.degree.len()
    }

    pub fn edge_event_count(&self) -> usize {
        self.edge_event_count
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(IndexMap::len).sum()
    }

    /// Generalized out-degree (sum of out-edge weights); 0 for unknown nodes.
    #[inline]
    pub fn degree(&self, u: NodeId) -> f64 {
        self.degree.get(u.index()).copied().unwrap_or(0.0)
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    /// A node with no positive-weight out-edges.
    #[inline]
    pub fn is_dangling(&self, u: NodeId) -> bool {
        self.out_edges.get(u.index()).is_none_or(IndexMap::is_empty)
    }

    pub fn weight(&self, u: NodeId, v: NodeId) -> f64 {
        self.out_edges
            .get(u.index())
            .and_then(|m| m.get(&v))
            .copied()
            .unwrap_or(0.0)
    }

    /// Current positive-weight out-edges of `u`.
    pub fn neighbors(&self, u: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.out_edges
            .get(u.index())
            .into_iter()
            .flat_map(|m| m.iter().map(|(&v, &w)| (v, w)))
    }

    pub fn in_neighbors(&self, u: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.in_edges
            .get(u.index())
            .into_iter()
            .flat_map(|m| m.iter().map(|(&v, &w)| (v, w)))
    }

    /// vol(G): total generalized degree.
    pub fn volume(&self) -> f64 {
        self.degree.iter().sum()
    }

    /// Checks the event's precondition without mutating the graph.
    pub fn validate_event(&self, e: &EdgeEvent) -> Result<()> {
        if e.delta == 0.0 || !e.delta.is_finite() {
            return Err(Error::Invariant(format!(
                "edge event ({}, {}) has weight delta {}",
                e.src, e.dst, e.delta
            )));
        }
        if e.delta < 0.0 {
            let current = self.weight(e.src, e.dst);
            if current + e.delta < -ZERO_WEIGHT_TOL {
                return Err(Error::NegativeWeight {
                    src: e.src,
                    dst: e.dst,
                    current,
                    delta: e.delta,
                });
            }
        }
        Ok(())
    }

    /// Applies one edge event. Returns the source's degree before the event.
    pub fn apply_event(&mut self, e: &EdgeEvent) -> Result<f64> {
        self.validate_event(e)?;
        let (u, v) = (e.src, e.dst);
        self.ensure_node_count(u.index().max(v.index()) + 1);
        let before = self.degree[u.index()];

        let out = &mut self.out_edges[u.index()];
        let w = out.get(&v).copied().unwrap_or(0.0) + e.delta;
        if w <= ZERO_WEIGHT_TOL {
            out.swap_remove(&v);
            self.in_edges[v.index()].swap_remove(&u);
        } else {
            out.insert(v, w);
            self.in_edges[v.index()].insert(u, w);
        }
        self.degree[u.index()] = if out.is_empty() {
            0.0
        } else {
            (before + e.delta).max(0.0)
        };
        self.edge_event_count += 1;
        Ok(before)
    }

    /// Degrees recomputed from the adjacency; used to check the maintained vector.
    pub fn recomputed_degrees(&self) -> Vec<f64> {
        self.out_edges.iter().map(|m| m.values().sum()).collect()
    }
}
