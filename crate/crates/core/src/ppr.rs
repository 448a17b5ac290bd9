//! Approximate Personalized PageRank over a dynamic weighted graph.
//!
//! Each tracked source keeps an estimate `p` and a residual `r`. Local
//! forward push drains residuals above `epsilon * degree`; edge events are
//! absorbed by an O(1) adjustment of `p(u)`, `r(u)` and `r(v)` that keeps
//! the degree-balance invariant
//!
//! ```text
//! p(u) + α r(u) = (1 − α) Σ_{x → u} w(x,u) p(x) / d(x) + α [u = s]
//! ```
//!
//! intact, so the next push only has to repair what the event disturbed.
//!
//! Nodes without out-edges behave as if they carried a self-loop of weight
//! 1, both here and in [`power_iteration_oracle`].

use std::collections::{HashSet, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{EdgeEvent, Graph, NodeId, ZERO_WEIGHT_TOL};
use crate::sparse::SparseVec;

/// Smallest push threshold accepted; smaller values are raised to this.
pub const MIN_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushParams {
    pub alpha: f64,
    pub epsilon: f64,
}

impl PushParams {
    /// Validates `alpha` and floors `epsilon` at [`MIN_EPSILON`].
    pub fn new(alpha: f64, epsilon: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            alpha,
            epsilon: epsilon.max(MIN_EPSILON),
        })
    }
}

impl Default for PushParams {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            epsilon: MIN_EPSILON,
        }
    }
}

/// Estimate/residual pair for one source node.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub source: NodeId,
    pub p: SparseVec,
    pub r: SparseVec,
    pub params: PushParams,
    // Nodes whose residual or degree changed since the last push.
    pending: Vec<NodeId>,
}

#[inline]
fn push_threshold(g: &Graph, u: NodeId, epsilon: f64) -> f64 {
    if g.is_dangling(u) {
        epsilon
    } else {
        epsilon * g.degree(u)
    }
}

impl TrackerState {
    /// Fresh state: `p = 0`, `r = 1_s`.
    pub fn new(source: NodeId, params: PushParams) -> Self {
        Self {
            source,
            p: SparseVec::new(),
            r: SparseVec::unit(source),
            params,
            pending: vec![source],
        }
    }

    /// Builds a state from explicit vectors; the next push scans all residuals.
    pub fn from_parts(source: NodeId, p: SparseVec, r: SparseVec, params: PushParams) -> Self {
        let pending = r.iter().map(|(k, _)| k).collect();
        Self {
            source,
            p,
            r,
            params,
            pending,
        }
    }

    /// Pushes until every residual is within threshold. Returns the number of
    /// push operations.
    pub fn push(&mut self, g: &Graph) -> usize {
        let seeds = std::mem::take(&mut self.pending);
        self.drain(g, seeds)
    }

    /// Like [`push`](Self::push) but scans every stored residual first, so it
    /// is valid for states modified behind the tracker's back.
    pub fn push_full(&mut self, g: &Graph) -> usize {
        self.pending.clear();
        let seeds: Vec<NodeId> = self.r.iter().map(|(k, _)| k).collect();
        self.drain(g, seeds)
    }

    fn drain(&mut self, g: &Graph, seeds: Vec<NodeId>) -> usize {
        let PushParams { alpha, epsilon } = self.params;
        let mut queue = VecDeque::new();
        let mut queued = HashSet::new();
        for u in seeds {
            if self.r.get(u).abs() > push_threshold(g, u, epsilon) && queued.insert(u) {
                queue.push_back(u);
            }
        }

        let mut pushes = 0;
        while let Some(u) = queue.pop_front() {
            queued.remove(&u);
            let ru = self.r.get(u);
            if ru.abs() <= push_threshold(g, u, epsilon) {
                continue;
            }
            pushes += 1;
            self.r.take(u);
            if g.is_dangling(u) {
                // Unit self-loop pushed to convergence: all of it lands in p.
                self.p.add(u, ru);
                continue;
            }
            self.p.add(u, alpha * ru);
            let share = (1.0 - alpha) * ru / g.degree(u);
            for (v, w) in g.neighbors(u) {
                let rv = self.r.add(v, share * w);
                if rv.abs() > push_threshold(g, v, epsilon) && queued.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        pushes
    }

    /// Absorbs edge event `e` given the source's degree before the event.
    pub fn adjust(&mut self, e: &EdgeEvent, pre_degree: f64) -> Result<()> {
        let alpha = self.params.alpha;
        let (u, v) = (e.src, e.dst);
        self.pending.push(u);
        self.pending.push(v);

        let pu = self.p.get(u);
        if pu == 0.0 {
            return Ok(());
        }
        if !pu.is_finite() || pre_degree < 0.0 {
            return Err(Error::Invariant(format!(
                "tracker {}: estimate {pu} at {u} with degree {pre_degree}",
                self.source
            )));
        }
        let spread = (1.0 - alpha) / alpha;
        if pre_degree == 0.0 {
            // The implicit unit self-loop is replaced by the new edge.
            self.r.add(u, -spread * pu);
            self.r.add(v, spread * pu);
            return Ok(());
        }
        let post = pre_degree + e.delta;
        if post <= ZERO_WEIGHT_TOL {
            // Last out-edge removed: u falls back to the implicit self-loop,
            // which keeps p(u) and mirrors the transition above.
            self.r.add(u, spread * pu);
            self.r.add(v, -spread * pu);
            return Ok(());
        }
        let moved = e.delta * pu / pre_degree;
        self.p.set(u, pu * post / pre_degree);
        self.r.add(u, -moved / alpha);
        self.r.add(v, spread * moved);
        Ok(())
    }

    /// [`adjust`](Self::adjust) reading the pre-event degree from `g_pre`.
    pub fn adjust_for_event(&mut self, e: &EdgeEvent, g_pre: &Graph) -> Result<()> {
        self.adjust(e, g_pre.degree(e.src))
    }

    /// Σp + Σr; equals 1 for a freshly pushed state.
    pub fn total_mass(&self) -> f64 {
        self.p.sum() + self.r.sum()
    }

    /// max |r(u)| / degree(u) over nodes with positive degree.
    pub fn max_threshold_ratio(&self, g: &Graph) -> f64 {
        self.r
            .iter()
            .filter(|&(u, _)| g.degree(u) > 0.0)
            .map(|(u, r)| r.abs() / g.degree(u))
            .fold(0.0, f64::max)
    }

    /// Largest violation of the degree-balance invariant over all nodes,
    /// evaluated by direct summation over in-neighbors.
    pub fn invariant_residual(&self, g: &Graph) -> f64 {
        let alpha = self.params.alpha;
        let span = self
            .p
            .iter()
            .chain(self.r.iter())
            .map(|(k, _)| k.index() + 1)
            .max()
            .unwrap_or(0)
            .max(g.node_count());
        let mut worst: f64 = 0.0;
        for i in 0..span {
            let u = NodeId(i as u32);
            let mut inflow: f64 = g
                .in_neighbors(u)
                .map(|(x, w)| w * self.p.get(x) / g.degree(x))
                .sum();
            if g.is_dangling(u) {
                inflow += self.p.get(u);
            }
            let teleport = if u == self.source { alpha } else { 0.0 };
            let lhs = self.p.get(u) + alpha * self.r.get(u);
            let rhs = (1.0 - alpha) * inflow + teleport;
            worst = worst.max((lhs - rhs).abs());
        }
        worst
    }
}

/// Runs local forward push from an arbitrary state.
pub fn dynamic_forward_push(mut state: TrackerState, g: &Graph) -> TrackerState {
    state.push_full(g);
    state
}

/// Iterations needed for power iteration to reach ℓ1 error `tol`.
pub fn oracle_iterations(alpha: f64, tol: f64) -> usize {
    (tol.ln() / (1.0 - alpha).ln()).ceil() as usize
}

/// Dense PPV of `s` by power iteration, with the same dangling rule as push.
pub fn power_iteration_oracle(g: &Graph, s: NodeId, alpha: f64, iters: usize) -> Vec<f64> {
    let n = g.node_count().max(s.index() + 1);
    let mut pi = vec![0.0; n];
    pi[s.index()] = 1.0;
    let mut next = vec![0.0; n];
    for _ in 0..iters {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &mass) in pi.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let u = NodeId(i as u32);
            if g.is_dangling(u) {
                next[i] += (1.0 - alpha) * mass;
                continue;
            }
            let share = (1.0 - alpha) * mass / g.degree(u);
            for (v, w) in g.neighbors(u) {
                next[v.index()] += share * w;
            }
        }
        next[s.index()] += alpha;
        std::mem::swap(&mut pi, &mut next);
    }
    pi
}

/// Trackers for a set of sources advanced together through event batches.
#[derive(Debug, Clone, Default)]
pub struct IncrementalPpr {
    trackers: Vec<TrackerState>,
}

impl IncrementalPpr {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts tracking `source` with a fresh push on `g`.
    pub fn add_source(&mut self, source: NodeId, params: PushParams, g: &Graph) {
        let mut state = TrackerState::new(source, params);
        state.push(g);
        self.trackers.push(state);
    }

    /// Starts tracking several sources, pushing them in parallel.
    pub fn add_sources(&mut self, sources: &[NodeId], params: PushParams, g: &Graph) {
        let fresh: Vec<TrackerState> = sources
            .par_iter()
            .map(|&s| {
                let mut state = TrackerState::new(s, params);
                state.push(g);
                state
            })
            .collect();
        self.trackers.extend(fresh);
    }

    pub fn trackers(&self) -> &[TrackerState] {
        &self.trackers
    }

    pub fn trackers_mut(&mut self) -> &mut [TrackerState] {
        &mut self.trackers
    }

    pub fn len(&self) -> usize {
        self.trackers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trackers.is_empty()
    }

    /// Applies one snapshot's events to `g` and brings every tracker up to
    /// date: each event is absorbed against the graph as it was just before
    /// that event, then each tracker pushes once on the post-batch graph.
    pub fn apply_batch(&mut self, g: &mut Graph, events: &[EdgeEvent]) -> Result<()> {
        let mut pre_degrees = Vec::with_capacity(events.len());
        for (index, e) in events.iter().enumerate() {
            let d = g.apply_event(e).map_err(|err| Error::AtEvent {
                snapshot: e.snapshot,
                index,
                source: Box::new(err),
            })?;
            pre_degrees.push(d);
        }
        self.update_trackers(g, events, &pre_degrees)
    }

    /// Tracker half of [`apply_batch`](Self::apply_batch), for callers that
    /// applied the events themselves and recorded each pre-event degree.
    pub fn update_trackers(
        &mut self,
        g: &Graph,
        events: &[EdgeEvent],
        pre_degrees: &[f64],
    ) -> Result<()> {
        let g = &*g;
        self.trackers.par_iter_mut().try_for_each(|state| {
            for (index, (e, &d)) in events.iter().zip(pre_degrees).enumerate() {
                state.adjust(e, d).map_err(|err| Error::AtEvent {
                    snapshot: e.snapshot,
                    index,
                    source: Box::new(err),
                })?;
            }
            state.push(g);
            Ok(())
        })
    }

    /// Deep copies of the current estimates, in tracker order.
    pub fn estimates(&self) -> Vec<SparseVec> {
        self.trackers.iter().map(|t| t.p.clone()).collect()
    }
}

/// Tracks `sources` from `g0` through `batches`; returns, per source, the
/// estimate after the initial push followed by one estimate per batch.
pub fn increment_push(
    g0: &Graph,
    batches: &[Vec<EdgeEvent>],
    sources: &[NodeId],
    params: PushParams,
) -> Result<Vec<Vec<SparseVec>>> {
    let mut g = g0.clone();
    let mut tracked = IncrementalPpr::new();
    tracked.add_sources(sources, params, &g);
    let mut series: Vec<Vec<SparseVec>> = tracked.estimates().into_iter().map(|p| vec![p]).collect();
    for batch in batches {
        tracked.apply_batch(&mut g, batch)?;
        for (out, p) in series.iter_mut().zip(tracked.estimates()) {
            out.push(p);
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(u: u32, v: u32, w: f64) -> EdgeEvent {
        EdgeEvent::new(NodeId(u), NodeId(v), w, 1)
    }

    fn params(alpha: f64, epsilon: f64) -> PushParams {
        PushParams::new(alpha, epsilon).unwrap()
    }

    #[test]
    fn epsilon_is_floored() {
        assert_eq!(params(0.15, 1e-20).epsilon, MIN_EPSILON);
        assert!(PushParams::new(1.0, 1e-4).is_err());
        assert!(PushParams::new(0.15, 0.0).is_err());
    }

    #[test]
    fn self_loop_single_push() {
        let g = Graph::from_events(&[ev(0, 0, 1.0)]).unwrap();
        let mut state = TrackerState::new(NodeId(0), params(0.5, 0.5));
        assert_eq!(state.push(&g), 1);
        assert_eq!(state.p.get(NodeId(0)), 0.5);
        assert_eq!(state.r.get(NodeId(0)), 0.5);
    }

    #[test]
    fn coarse_threshold_never_pushes() {
        let g = Graph::from_events(&[ev(0, 1, 1.0), ev(0, 2, 3.0), ev(1, 0, 1.0)]).unwrap();
        // degree(s) = 4, so epsilon = 0.25 leaves r = 1_s in place.
        let state = dynamic_forward_push(TrackerState::new(NodeId(0), params(0.15, 0.25)), &g);
        assert!(state.p.is_empty());
        assert_eq!(state.r, SparseVec::unit(NodeId(0)));
    }

    #[test]
    fn path_graph_matches_oracle() {
        let g = Graph::from_events(&[ev(0, 1, 1.0), ev(1, 1, 1.0)]).unwrap();
        let state = dynamic_forward_push(TrackerState::new(NodeId(0), params(0.15, 1e-8)), &g);
        let pi = power_iteration_oracle(&g, NodeId(0), 0.15, 2000);
        let gap = crate::sparse::l1_gap(&state.p, &pi);
        assert!(gap <= 1e-8 * g.volume(), "gap {gap}");
        // Closed form: π(s) = α, π(t) = 1 − α.
        assert!((pi[0] - 0.15).abs() < 1e-12 && (pi[1] - 0.85).abs() < 1e-12);
    }

    #[test]
    fn adjust_with_zero_estimate_is_identity() {
        let mut state = TrackerState::from_parts(
            NodeId(0),
            SparseVec::new(),
            [(NodeId(1), 0.3), (NodeId(2), -0.1)].into_iter().collect(),
            params(0.5, 1e-4),
        );
        let (p, r) = (state.p.clone(), state.r.clone());
        state.adjust(&ev(1, 2, 4.0), 2.0).unwrap();
        state.adjust(&ev(5, 2, -1.0), 1.0).unwrap();
        assert_eq!((state.p, state.r), (p, r));
    }

    #[test]
    fn adjust_substitution() {
        let (u, v) = (NodeId(1), NodeId(2));
        let mut state = TrackerState::from_parts(
            NodeId(0),
            [(u, 0.1)].into_iter().collect(),
            [(u, 0.05)].into_iter().collect(),
            params(0.5, 1e-4),
        );
        state.adjust(&ev(1, 2, 1.0), 1.0).unwrap();
        assert!((state.p.get(u) - 0.2).abs() < 1e-15);
        assert!((state.r.get(u) + 0.15).abs() < 1e-15);
        assert!((state.r.get(v) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn insert_then_delete_restores_state() {
        let g = Graph::from_events(&[ev(0, 1, 1.0), ev(1, 2, 2.0), ev(2, 0, 1.0), ev(1, 0, 0.5)])
            .unwrap();
        let mut state = TrackerState::new(NodeId(0), params(0.15, 1e-6));
        state.push(&g);
        let before = (state.p.clone(), state.r.clone());
        let d = g.degree(NodeId(1));
        state.adjust(&ev(1, 0, 3.0), d).unwrap();
        state.adjust(&ev(1, 0, -3.0), d + 3.0).unwrap();
        for (k, x) in before.0.iter() {
            assert!((state.p.get(k) - x).abs() <= 1e-12);
        }
        for (k, x) in before.1.iter().chain(state.r.iter()) {
            assert!((state.r.get(k) - before.1.get(k)).abs() <= 1e-12, "{k} {x}");
        }
    }

    #[test]
    fn corrupted_estimate_is_reported() {
        let mut state = TrackerState::from_parts(
            NodeId(0),
            [(NodeId(0), f64::NAN)].into_iter().collect(),
            SparseVec::new(),
            params(0.5, 1e-4),
        );
        assert!(matches!(state.adjust(&ev(0, 1, 1.0), 1.0), Err(Error::Invariant(_))));
    }

    #[test]
    fn dangling_source_absorbs_all_mass_then_gains_edges() {
        let mut g = Graph::with_nodes(3);
        let prm = params(0.2, 1e-9);
        let mut state = TrackerState::new(NodeId(0), prm);
        state.push(&g);
        assert_eq!(state.p.get(NodeId(0)), 1.0);
        assert!(state.invariant_residual(&g) < 1e-12);

        let e = ev(0, 1, 2.0);
        let d = g.apply_event(&e).unwrap();
        state.adjust(&e, d).unwrap();
        assert!(state.invariant_residual(&g) < 1e-12);
        state.push(&g);
        let pi = power_iteration_oracle(&g, NodeId(0), 0.2, oracle_iterations(0.2, 1e-14));
        assert!(crate::sparse::l1_gap(&state.p, &pi) <= 1e-9 * (g.volume() + 3.0));
    }

    #[test]
    fn oracle_two_cycle() {
        let g = Graph::from_events(&[ev(0, 1, 1.0), ev(1, 0, 1.0)]).unwrap();
        let pi = power_iteration_oracle(&g, NodeId(0), 0.5, 200);
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_isolated_source() {
        let g = Graph::with_nodes(4);
        let pi = power_iteration_oracle(&g, NodeId(2), 0.15, 100);
        assert_eq!(pi, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn empty_batch_keeps_estimates() {
        let g0 = Graph::from_events(&[ev(0, 1, 1.0), ev(1, 2, 1.0), ev(2, 0, 1.0)]).unwrap();
        let out = increment_push(&g0, &[vec![ev(0, 2, 1.0)], vec![]], &[NodeId(0)], params(0.15, 1e-7))
            .unwrap();
        assert_eq!(out[0].len(), 3);
        assert_eq!(out[0][1], out[0][2]);
    }

    #[test]
    fn sources_are_independent() {
        let g0 = Graph::from_events(&[
            ev(0, 1, 1.0),
            ev(1, 2, 2.0),
            ev(2, 3, 1.0),
            ev(3, 0, 1.0),
            ev(2, 4, 1.0),
        ])
        .unwrap();
        let batches = vec![vec![ev(4, 0, 1.0), ev(1, 3, 2.0)], vec![ev(1, 2, -1.0)]];
        let prm = params(0.15, 1e-8);
        let fwd = increment_push(&g0, &batches, &[NodeId(0), NodeId(3)], prm).unwrap();
        let rev = increment_push(&g0, &batches, &[NodeId(3), NodeId(0)], prm).unwrap();
        assert_eq!(fwd[0], rev[1]);
        assert_eq!(fwd[1], rev[0]);
    }

    #[test]
    fn bad_event_reports_position() {
        let g0 = Graph::from_events(&[ev(0, 1, 1.0)]).unwrap();
        let batch = vec![ev(0, 1, 1.0), EdgeEvent::new(NodeId(1), NodeId(0), -1.0, 4)];
        let err = increment_push(&g0, &[batch], &[NodeId(0)], params(0.15, 1e-6)).unwrap_err();
        match err {
            Error::AtEvent { snapshot, index, source } => {
                assert_eq!((snapshot, index), (4, 1));
                assert!(matches!(*source, Error::NegativeWeight { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
