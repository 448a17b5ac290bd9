//! Support-sparse real vectors keyed by node.

use indexmap::IndexMap;

use crate::graph::NodeId;

/// Sparse vector storing only nonzero entries, iterated in insertion order
/// so every derived sum is reproducible run to run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec(IndexMap<NodeId, f64>);

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn unit(at: NodeId) -> Self {
        let mut v = Self::new();
        v.set(at, 1.0);
        v
    }

    #[inline]
    pub fn get(&self, at: NodeId) -> f64 {
        self.0.get(&at).copied().unwrap_or(0.0)
    }

    /// Stores `value`, dropping the entry when it is exactly zero.
    #[inline]
    pub fn set(&mut self, at: NodeId, value: f64) {
        if value == 0.0 {
            self.0.swap_remove(&at);
        } else {
            self.0.insert(at, value);
        }
    }

    /// Adds `delta` and returns the new value.
    #[inline]
    pub fn add(&mut self, at: NodeId, delta: f64) -> f64 {
        let slot = self.0.entry(at).or_insert(0.0);
        *slot += delta;
        let value = *slot;
        if value == 0.0 {
            self.0.swap_remove(&at);
        }
        value
    }

    #[inline]
    pub fn take(&mut self, at: NodeId) -> f64 {
        self.0.swap_remove(&at).unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    pub fn retain(&mut self, mut keep: impl FnMut(NodeId, f64) -> bool) {
        self.0.retain(|&k, v| keep(k, *v));
    }

    pub fn sum(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.values().map(|v| v.abs()).sum()
    }

    pub fn scaled(&self, factor: f64) -> SparseVec {
        SparseVec(self.0.iter().map(|(&k, &v)| (k, v * factor)).collect())
    }

    /// ℓp distance over the union of supports.
    pub fn lp_distance(&self, other: &SparseVec, p: u32) -> f64 {
        let mut acc = 0.0;
        for (k, a) in self.iter() {
            acc += (a - other.get(k)).abs().powi(p as i32);
        }
        for (k, b) in other.iter() {
            if !self.0.contains_key(&k) {
                acc += b.abs().powi(p as i32);
            }
        }
        root(acc, p)
    }

    pub fn l1_distance(&self, other: &SparseVec) -> f64 {
        self.lp_distance(other, 1)
    }

    /// Entries sorted by node index.
    pub fn sorted_entries(&self) -> Vec<(NodeId, f64)> {
        let mut out: Vec<_> = self.iter().collect();
        out.sort_unstable_by_key(|&(k, _)| k);
        out
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (k, v) in self.iter() {
            if k.index() >= out.len() {
                out.resize(k.index() + 1, 0.0);
            }
            out[k.index()] = v;
        }
        out
    }
}

impl FromIterator<(NodeId, f64)> for SparseVec {
    fn from_iter<I: IntoIterator<Item = (NodeId, f64)>>(iter: I) -> Self {
        let mut v = SparseVec::new();
        for (k, x) in iter {
            v.add(k, x);
        }
        v
    }
}

pub(crate) fn root(acc: f64, p: u32) -> f64 {
    match p {
        1 => acc,
        2 => acc.sqrt(),
        _ => acc.powf(1.0 / p as f64),
    }
}

/// ℓ1 distance between a sparse and a dense vector.
pub fn l1_gap(sparse: &SparseVec, dense: &[f64]) -> f64 {
    let mut gap = 0.0;
    for (i, &d) in dense.iter().enumerate() {
        gap += (sparse.get(NodeId(i as u32)) - d).abs();
    }
    for (k, v) in sparse.iter() {
        if k.index() >= dense.len() {
            gap += v.abs();
        }
    }
    gap
}
