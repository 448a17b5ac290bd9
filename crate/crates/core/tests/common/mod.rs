#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ppr_anomaly::stream::EventStream;
use ppr_anomaly::{EdgeEvent, Graph, NodeId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random weighted digraph on `n` nodes with `m` edge insertions, weights
/// drawn from `[0.1, max_w)`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, m: usize, max_w: f64) -> Graph {
    let mut g = Graph::with_nodes(n);
    for _ in 0..m {
        let u = NodeId(rng.random_range(0..n as u32));
        let v = NodeId(rng.random_range(0..n as u32));
        let w = rng.random_range(0.1..max_w);
        g.apply_event(&EdgeEvent::new(u, v, w, 0)).unwrap();
    }
    g
}

/// Random event mixing insertions, partial weight changes and exact
/// deletions of existing edges. Deletions read the current weight, so they
/// are always valid against `g`.
pub fn random_event(rng: &mut ChaCha8Rng, g: &Graph, snapshot: u64) -> EdgeEvent {
    let n = g.node_count() as u32;
    let existing: Option<(NodeId, NodeId, f64)> = (0..8).find_map(|_| {
        let u = NodeId(rng.random_range(0..n));
        let nbrs: Vec<_> = g.neighbors(u).collect();
        if nbrs.is_empty() {
            None
        } else {
            let (v, w) = nbrs[rng.random_range(0..nbrs.len())];
            Some((u, v, w))
        }
    });
    match (rng.random_range(0..10), existing) {
        (0..=1, Some((u, v, w))) => EdgeEvent::new(u, v, -w, snapshot),
        (2..=3, Some((u, v, w))) => {
            let delta = if rng.random_bool(0.5) {
                -w * rng.random_range(0.1..0.9)
            } else {
                rng.random_range(0.1..2.0)
            };
            EdgeEvent::new(u, v, delta, snapshot)
        }
        _ => EdgeEvent::new(
            NodeId(rng.random_range(0..n)),
            NodeId(rng.random_range(0..n)),
            rng.random_range(0.1..3.0),
            snapshot,
        ),
    }
}

/// Background interaction stream: `initial_edges` unit edges at snapshot 0,
/// then `per_snapshot` random unit insertions in each of `snapshots`
/// snapshots. Node names are `n0 … n{n-1}`, all declared at snapshot 0.
pub fn background_stream(
    seed: u64,
    n: usize,
    initial_edges: usize,
    snapshots: u64,
    per_snapshot: usize,
) -> EventStream {
    let mut rng = rng(seed);
    let mut text = String::new();
    // A ring keeps every node present and non-dangling from the start.
    for i in 0..n {
        text += &format!("0\tn{i}\tn{}\t1\n", (i + 1) % n);
    }
    let pair = |rng: &mut ChaCha8Rng| loop {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            return (u, v);
        }
    };
    for _ in 0..initial_edges {
        let (u, v) = pair(&mut rng);
        text += &format!("0\tn{u}\tn{v}\t1\n");
    }
    for t in 1..=snapshots {
        for _ in 0..per_snapshot {
            let (u, v) = pair(&mut rng);
            text += &format!("{t}\tn{u}\tn{v}\t1\n");
        }
    }
    EventStream::parse(&text).unwrap()
}
