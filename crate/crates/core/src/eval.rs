//! Detection quality metrics for node- and graph-level scores.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::injection::GroundTruth;

/// Score series per node, as `(snapshot, score)` pairs.
pub type NodeScores = BTreeMap<String, Vec<(u64, f64)>>;

pub fn group_scores<I, S>(records: I) -> NodeScores
where
    I: IntoIterator<Item = (S, u64, f64)>,
    S: Into<String>,
{
    let mut out = NodeScores::new();
    for (node, snapshot, score) in records {
        out.entry(node.into()).or_default().push((snapshot, score));
    }
    out
}

/// The `k` highest-scoring snapshots; equal scores go to the earlier snapshot.
pub fn top_k_snapshots(series: &[(u64, f64)], k: usize) -> Vec<u64> {
    let mut ranked = series.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(t, _)| t).collect()
}

/// Mean over labeled nodes of the fraction of their `k_u = |Y_u|` top-scored
/// snapshots that are labeled anomalous.
pub fn precision_avg(scores: &NodeScores, truth: &GroundTruth) -> Result<f64> {
    let mut total = 0.0;
    let mut nodes = 0usize;
    for (node, labeled) in &truth.labels {
        if labeled.is_empty() {
            continue;
        }
        let series = scores
            .get(node)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::MissingSeries(node.clone()))?;
        let k = labeled.len();
        let hits = top_k_snapshots(series, k)
            .iter()
            .filter(|t| labeled.contains(t))
            .count();
        total += hits as f64 / k as f64;
        nodes += 1;
    }
    Ok(if nodes == 0 { 0.0 } else { total / nodes as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
}

fn pr_point(ranked: &[u64], truth: &BTreeSet<u64>, k: usize) -> PrPoint {
    let k = k.min(ranked.len());
    let hits = ranked[..k].iter().filter(|t| truth.contains(t)).count() as f64;
    PrPoint {
        k,
        precision: if k == 0 { 0.0 } else { hits / k as f64 },
        recall: if truth.is_empty() { 0.0 } else { hits / truth.len() as f64 },
    }
}

/// Fraction of the `k` highest-scoring snapshots that are in `truth`.
pub fn precision_at_k(scores: &[(u64, f64)], truth: &BTreeSet<u64>, k: usize) -> f64 {
    pr_point(&top_k_snapshots(scores, scores.len()), truth, k).precision
}

/// Precision and recall for every `k` in `ks`.
pub fn pr_sweep(scores: &[(u64, f64)], truth: &BTreeSet<u64>, ks: &[usize]) -> Vec<PrPoint> {
    let ranked = top_k_snapshots(scores, scores.len());
    ks.iter().map(|&k| pr_point(&ranked, truth, k)).collect()
}

/// I.i.d. uniform(0, 1) scores for every node at every snapshot.
pub fn random_baseline(nodes: &[String], snapshots: &[u64], rng_seed: u64) -> NodeScores {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    nodes
        .iter()
        .map(|n| {
            let series = snapshots.iter().map(|&t| (t, rng.random::<f64>())).collect();
            (n.clone(), series)
        })
        .collect()
}
