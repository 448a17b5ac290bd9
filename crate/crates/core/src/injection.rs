//! Synthetic anomaly injection into event streams.
//!
//! Two patterns are supported. A *star* picks a high-degree hub and bursts
//! unit-weight edges from it to nodes it was not connected to; a *link*
//! bursts edges between a handful of random node pairs. Both record the
//! affected endpoints as ground truth at the injected snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeEvent, Graph, NodeId};
use crate::stream::EventStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionKind {
    Star,
    Link,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionPlan {
    pub kind: InjectionKind,
    pub snapshots: BTreeSet<u64>,
    pub edges_per_injection: usize,
    pub targets_per_star: usize,
    pub pairs_per_link: usize,
    pub high_degree_quantile: f64,
    pub rng_seed: u64,
}

impl InjectionPlan {
    pub const DEFAULT_SNAPSHOT_COUNT: usize = 20;

    pub fn new(kind: InjectionKind, rng_seed: u64) -> Self {
        Self {
            kind,
            snapshots: BTreeSet::new(),
            edges_per_injection: 70,
            targets_per_star: 10,
            pairs_per_link: 5,
            high_degree_quantile: 0.01,
            rng_seed,
        }
    }

    /// Picks `count` distinct snapshots uniformly from `first..=last`.
    pub fn with_random_snapshots(mut self, first: u64, last: u64, count: usize) -> Result<Self> {
        if last < first || (last - first + 1) < count as u64 {
            return Err(Error::Infeasible(format!(
                "cannot choose {count} snapshots from {first}..={last}"
            )));
        }
        // Separate stream from the one used for the injections themselves.
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed ^ 0x5eed_5eed_5eed_5eed);
        self.snapshots = sample(&mut rng, (last - first + 1) as usize, count)
            .into_iter()
            .map(|i| first + i as u64)
            .collect();
        Ok(self)
    }

    fn validate(&self, stream: &EventStream, init_snapshot: u64) -> Result<()> {
        let counts = [
            self.edges_per_injection,
            self.targets_per_star,
            self.pairs_per_link,
        ];
        if counts.contains(&0) {
            return Err(Error::Config("injection counts must be positive".into()));
        }
        if !(self.high_degree_quantile > 0.0 && self.high_degree_quantile <= 1.0) {
            return Err(Error::Config(format!(
                "high_degree_quantile must lie in (0, 1], got {}",
                self.high_degree_quantile
            )));
        }
        let last = stream.max_snapshot().unwrap_or(init_snapshot);
        if let Some(&t) = self
            .snapshots
            .iter()
            .find(|&&t| t <= init_snapshot || t > last)
        {
            return Err(Error::Config(format!(
                "injection snapshot {t} outside {}..={last}",
                init_snapshot + 1
            )));
        }
        Ok(())
    }
}

/// Anomalous snapshots per node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub labels: BTreeMap<String, BTreeSet<u64>>,
}

impl GroundTruth {
    pub fn insert(&mut self, node: &str, snapshot: u64) {
        self.labels.entry(node.to_owned()).or_default().insert(snapshot);
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Every snapshot carrying at least one label.
    pub fn snapshots(&self) -> BTreeSet<u64> {
        self.labels.values().flatten().copied().collect()
    }

    pub fn merge(&mut self, other: &GroundTruth) {
        for (node, snaps) in &other.labels {
            self.labels.entry(node.clone()).or_default().extend(snaps);
        }
    }

    /// `node<TAB>snapshot` lines; `#` comments allowed.
    pub fn parse(text: &str) -> Result<Self> {
        let mut truth = GroundTruth::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (node, snap) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "expected node<TAB>snapshot".into(),
            })?;
            let snap = snap.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad snapshot id {snap:?}"),
            })?;
            truth.insert(node.trim(), snap);
        }
        Ok(truth)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        for (node, snaps) in &self.labels {
            for s in snaps {
                writeln!(w, "{node}\t{s}")?;
            }
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = io::BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }
}

/// Injects the plan's pattern into `stream`. Events at or before
/// `init_snapshot` are never touched and never receive injections.
pub fn inject(
    stream: &EventStream,
    plan: &InjectionPlan,
    init_snapshot: u64,
) -> Result<(EventStream, GroundTruth)> {
    plan.validate(stream, init_snapshot)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.rng_seed);
    let mut out = EventStream {
        names: stream.names.clone(),
        events: Vec::with_capacity(stream.events.len() + plan.snapshots.len() * plan.edges_per_injection),
    };
    let mut truth = GroundTruth::default();
    let mut g = Graph::with_nodes(stream.names.len());
    let mut pending = plan.snapshots.iter().copied().peekable();

    let mut flush = |t: u64, g: &mut Graph, out: &mut EventStream, truth: &mut GroundTruth| -> Result<()> {
        let injected = match plan.kind {
            InjectionKind::Star => star_events(g, plan, t, &mut rng)?,
            InjectionKind::Link => link_events(g, plan, t, &mut rng)?,
        };
        for e in injected {
            g.apply_event(&e)?;
            truth.insert(out.names.name(e.src), t);
            truth.insert(out.names.name(e.dst), t);
            out.events.push(e);
        }
        Ok(())
    };

    for e in &stream.events {
        while let Some(t) = pending.next_if(|&t| t < e.snapshot) {
            flush(t, &mut g, &mut out, &mut truth)?;
        }
        g.apply_event(e)?;
        out.events.push(*e);
    }
    for t in pending {
        flush(t, &mut g, &mut out, &mut truth)?;
    }
    Ok((out, truth))
}

/// Nodes in descending degree order (ties to the smaller index), limited to
/// those with positive degree.
fn degree_ranking(g: &Graph) -> Vec<NodeId> {
    let mut ranked: Vec<(NodeId, f64)> = g
        .degrees()
        .iter()
        .enumerate()
        .filter(|&(_, &d)| d > 0.0)
        .map(|(i, &d)| (NodeId(i as u32), d))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().map(|(u, _)| u).collect()
}

fn star_events(g: &Graph, plan: &InjectionPlan, t: u64, rng: &mut ChaCha8Rng) -> Result<Vec<EdgeEvent>> {
    let n = g.node_count();
    let ranked = degree_ranking(g);
    if ranked.is_empty() {
        return Err(Error::Infeasible(format!("snapshot {t}: no node has positive degree")));
    }
    let top = ((plan.high_degree_quantile * n as f64).ceil() as usize).clamp(1, ranked.len());
    let hub = ranked[rng.random_range(0..top)];

    let candidates: Vec<NodeId> = (0..n as u32)
        .map(NodeId)
        .filter(|&x| x != hub && g.weight(hub, x) == 0.0 && g.weight(x, hub) == 0.0)
        .collect();
    if candidates.len() < plan.targets_per_star {
        return Err(Error::Infeasible(format!(
            "snapshot {t}: hub {hub} has {} non-adjacent nodes, {} needed",
            candidates.len(),
            plan.targets_per_star
        )));
    }
    let targets: Vec<NodeId> = sample(rng, candidates.len(), plan.targets_per_star)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    Ok((0..plan.edges_per_injection)
        .map(|j| EdgeEvent::new(hub, targets[j % targets.len()], 1.0, t))
        .collect())
}

/// Splits `total` over `parts` as evenly as possible, remainder first.
pub fn even_split(total: usize, parts: usize) -> Vec<usize> {
    let (base, extra) = (total / parts, total % parts);
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

fn link_events(g: &Graph, plan: &InjectionPlan, t: u64, rng: &mut ChaCha8Rng) -> Result<Vec<EdgeEvent>> {
    let n = g.node_count();
    if n < 2 {
        return Err(Error::Infeasible(format!("snapshot {t}: graph has {n} nodes")));
    }
    let mut out = Vec::with_capacity(plan.edges_per_injection);
    for count in even_split(plan.edges_per_injection, plan.pairs_per_link) {
        let pair = sample(rng, n, 2);
        let (u, v) = (NodeId(pair.index(0) as u32), NodeId(pair.index(1) as u32));
        out.extend((0..count).map(|_| EdgeEvent::new(u, v, 1.0, t)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ring of `n` nodes in snapshot 0, plus one chord per later snapshot.
    fn background(n: usize, last: u64) -> EventStream {
        let mut text = String::new();
        for i in 0..n {
            text += &format!("0\tn{i}\tn{}\t1\n", (i + 1) % n);
        }
        for t in 1..=last {
            text += &format!("{t}\tn{}\tn{}\t1\n", t as usize % n, (t as usize * 7 + 3) % n);
        }
        EventStream::parse(&text).unwrap()
    }

    fn plan(kind: InjectionKind, snaps: &[u64]) -> InjectionPlan {
        InjectionPlan {
            snapshots: snaps.iter().copied().collect(),
            ..InjectionPlan::new(kind, 42)
        }
    }

    #[test]
    fn star_adds_planned_event_count() {
        let s = background(60, 10);
        let p = plan(InjectionKind::Star, &[2, 5, 9]);
        let (out, truth) = inject(&s, &p, 0).unwrap();
        assert_eq!(out.events.len(), s.events.len() + 3 * 70);
        assert_eq!(truth.snapshots(), p.snapshots);
        // Original events survive in order.
        let mut rest = out.events.iter();
        assert!(s.events.iter().all(|e| rest.any(|o| o == e)));
        for t in [2, 5, 9] {
            let injected: Vec<_> = out.events.iter().filter(|e| e.snapshot == t).collect();
            let hub = injected.last().unwrap().src;
            let targets: BTreeSet<_> = injected.iter().rev().take(70).map(|e| e.dst).collect();
            assert_eq!(targets.len(), 10);
            assert!(injected.iter().rev().take(70).all(|e| e.src == hub));
            let labeled: BTreeSet<_> = truth
                .labels
                .iter()
                .filter(|(_, s)| s.contains(&t))
                .map(|(n, _)| n.clone())
                .collect();
            assert_eq!(labeled.len(), 11);
            assert!(labeled.contains(out.names.name(hub)));
        }
    }

    #[test]
    fn star_targets_are_fresh_and_round_robin() {
        let s = background(40, 4);
        let (out, _) = inject(&s, &plan(InjectionKind::Star, &[3]), 0).unwrap();
        let pre = Graph::from_events(out.events.iter().filter(|e| e.snapshot < 3)).unwrap();
        let at3: Vec<_> = out.events.iter().copied().filter(|e| e.snapshot == 3).collect();
        let injected = at3[at3.len() - 70..].to_vec();
        let hub = injected[0].src;
        let mut per_target = BTreeMap::new();
        for e in &injected {
            assert_eq!(pre.weight(hub, e.dst), 0.0);
            assert_eq!(pre.weight(e.dst, hub), 0.0);
            *per_target.entry(e.dst).or_insert(0) += 1;
        }
        assert!(per_target.values().all(|&c| c == 7));
    }

    #[test]
    fn empty_plan_is_identity() {
        let s = background(20, 5);
        let (out, truth) = inject(&s, &plan(InjectionKind::Star, &[]), 0).unwrap();
        assert_eq!(out.events, s.events);
        assert!(truth.is_empty());
    }

    #[test]
    fn injection_is_deterministic() {
        let s = background(50, 12);
        let p = plan(InjectionKind::Link, &[1, 4, 12]);
        let (a, ta) = inject(&s, &p, 0).unwrap();
        let (b, tb) = inject(&s, &p, 0).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(ta, tb);
        let other = InjectionPlan { rng_seed: 43, ..p };
        assert_ne!(inject(&s, &other, 0).unwrap().0.events, a.events);
    }

    #[test]
    fn star_needs_enough_candidates() {
        let s = background(8, 3);
        let err = inject(&s, &plan(InjectionKind::Star, &[2]), 0).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn link_split_and_labels() {
        assert_eq!(even_split(70, 5), vec![14; 5]);
        assert_eq!(even_split(70, 1), vec![70]);
        assert_eq!(even_split(7, 3), vec![3, 2, 2]);

        let s = background(30, 6);
        let (out, truth) = inject(&s, &plan(InjectionKind::Link, &[6]), 0).unwrap();
        let injected = &out.events[s.events.len()..];
        assert_eq!(injected.len(), 70);
        let mut pairs: BTreeMap<(NodeId, NodeId), usize> = BTreeMap::new();
        for e in injected {
            assert_ne!(e.src, e.dst);
            *pairs.entry((e.src, e.dst)).or_default() += 1;
        }
        let labeled = truth.labels.len();
        assert!(labeled <= 10 && labeled >= 2);
        let endpoints: BTreeSet<_> = pairs.keys().flat_map(|&(u, v)| [u, v]).collect();
        assert_eq!(endpoints.len(), labeled);
    }

    #[test]
    fn link_needs_two_nodes() {
        let s = EventStream::parse("0\ta\ta\t1\n1\ta\ta\t1\n").unwrap();
        assert!(matches!(
            inject(&s, &plan(InjectionKind::Link, &[1]), 0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn injection_into_event_free_snapshot() {
        // Snapshots 2 and 3 carry no background events.
        let mut s = background(30, 1);
        s.events.push(EdgeEvent::new(NodeId(0), NodeId(5), 1.0, 4));
        let (out, truth) = inject(&s, &plan(InjectionKind::Link, &[2, 3]), 0).unwrap();
        let snaps: Vec<u64> = out.events.iter().map(|e| e.snapshot).collect();
        assert!(snaps.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(truth.snapshots(), [2, 3].into());
    }

    #[test]
    fn plan_range_is_checked() {
        let s = background(30, 5);
        assert!(inject(&s, &plan(InjectionKind::Link, &[0]), 0).is_err());
        assert!(inject(&s, &plan(InjectionKind::Link, &[6]), 0).is_err());
        let chosen = InjectionPlan::new(InjectionKind::Star, 1)
            .with_random_snapshots(1, 5, 5)
            .unwrap();
        assert_eq!(chosen.snapshots, (1..=5).collect());
        assert!(InjectionPlan::new(InjectionKind::Star, 1).with_random_snapshots(1, 5, 6).is_err());
    }

    #[test]
    fn truth_file_round_trip() {
        let t = GroundTruth::parse("# c\nb\t3\na\t1\na\t2\n").unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a\t1\na\t2\nb\t3\n");
        assert!(GroundTruth::parse("a 1\n").is_err());
    }
}
