//! End-to-end tracking runs and invariant checks over an event stream.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::anomaly::{graph_score, node_score, TrackingList};
use crate::config::RunConfig;
use crate::embedding::{default_epsilon_c, NodeRepresentation, Reducer, RepresentationMode};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::ppr::{oracle_iterations, power_iteration_oracle, IncrementalPpr, TrackerState};
use crate::sparse::{l1_gap, SparseVec};
use crate::stream::{Batches, EventStream};

#[derive(Debug, Clone, Default, Serialize)]
pub struct PhaseTimings {
    pub ingest_s: f64,
    pub initial_push_s: f64,
    /// Node-level tracker work (event adjustments and pushes) after the
    /// initial snapshot.
    pub tracker_s: f64,
    pub graph_tracker_s: f64,
    pub graph_update_s: f64,
    pub represent_s: f64,
    pub score_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Derived {
    pub epsilon: f64,
    pub epsilon_c: f64,
    pub representation_mode: RepresentationMode,
    pub id_space: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub bucket: u32,
    pub sign: u32,
    pub rng: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Counts {
    pub nodes: usize,
    pub events: usize,
    pub initial_events: usize,
    pub snapshots: usize,
    pub tracked_nodes: usize,
    pub graph_tracked_nodes: usize,
    pub node_score_rows: usize,
    pub graph_score_rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub seeds: Seeds,
    pub derived: Derived,
    pub counts: Counts,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone)]
pub struct NodeScoreRow {
    pub node: String,
    pub snapshot: u64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub node_scores: Vec<NodeScoreRow>,
    pub graph_scores: Vec<(u64, f64)>,
    /// `source,snapshot,mode,entries` lines when requested.
    pub representations: Option<Vec<String>>,
    pub manifest: Manifest,
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn resolve_sources(names: &[String], stream: &EventStream) -> Result<Vec<NodeId>> {
    names
        .iter()
        .map(|n| {
            stream
                .names
                .get(n)
                .ok_or_else(|| Error::Config(format!("tracked node {n:?} does not occur in the stream")))
        })
        .collect()
}

/// Runs tracking and scoring over `stream` as configured.
pub fn run(config: &RunConfig, stream: &EventStream) -> Result<RunOutput> {
    config.validate()?;
    let params = config.push_params()?;
    let mut timings = PhaseTimings::default();

    let clock = Instant::now();
    let stream = if config.undirected {
        stream.mirrored()
    } else {
        stream.clone()
    };
    let Batches { initial, snapshots } = stream.batches(config.init_snapshot);
    let mut g = Graph::with_nodes(stream.names.len());
    for (index, e) in initial.iter().enumerate() {
        g.apply_event(e).map_err(|err| Error::AtEvent {
            snapshot: e.snapshot,
            index,
            source: Box::new(err),
        })?;
    }
    timings.ingest_s = secs(clock.elapsed());

    let id_space = stream.names.len();
    let reducer = Reducer {
        mode: RepresentationMode::for_id_space(id_space, config.dim, config.force_hashed),
        hash: config.hash_pair(),
        epsilon_c: config.epsilon_c.unwrap_or_else(|| default_epsilon_c(id_space)),
        log_floor: config.log_floor,
    };

    let tracked_names = if config.mode.node() {
        let names = config.resolve_tracked()?;
        if names.is_empty() {
            return Err(Error::Config("node-level scoring needs at least one tracked node".into()));
        }
        names
    } else {
        Vec::new()
    };
    let sources = resolve_sources(&tracked_names, &stream)?;

    let clock = Instant::now();
    let mut node_ppr = IncrementalPpr::new();
    node_ppr.add_sources(&sources, params, &g);
    let mut graph_ppr = IncrementalPpr::new();
    let mut tracking = TrackingList::new(config.graph_topk);
    if config.mode.graph() {
        let fresh = tracking.update(&g);
        graph_ppr.add_sources(&fresh, params, &g);
    }
    timings.initial_push_s = secs(clock.elapsed());

    let mut dump = config.dump_representations.then(Vec::new);
    let record_reps = |snapshot: u64, reps: &[NodeRepresentation], dump: &mut Option<Vec<String>>| {
        if let Some(lines) = dump {
            for (name, rep) in tracked_names.iter().zip(reps) {
                lines.push(format!("{name},{snapshot},{},{}", rep.mode().as_str(), rep.encode_entries()));
            }
        }
    };

    let clock = Instant::now();
    let mut prev_reps: Vec<NodeRepresentation> =
        node_ppr.trackers().iter().map(|t| reducer.represent(&t.p)).collect();
    timings.represent_s += secs(clock.elapsed());
    record_reps(config.init_snapshot, &prev_reps, &mut dump);

    let mut prev_graph: Vec<SparseVec> = graph_ppr.estimates();
    let mut node_rows: Vec<(usize, u64, f64)> = Vec::with_capacity(sources.len() * snapshots.len());
    let mut graph_scores = Vec::with_capacity(if config.mode.graph() { snapshots.len() } else { 0 });

    for (t, events) in &snapshots {
        let clock = Instant::now();
        let mut pre_degrees = Vec::with_capacity(events.len());
        for (index, e) in events.iter().enumerate() {
            let d = g.apply_event(e).map_err(|err| Error::AtEvent {
                snapshot: *t,
                index,
                source: Box::new(err),
            })?;
            pre_degrees.push(d);
        }
        timings.graph_update_s += secs(clock.elapsed());

        let clock = Instant::now();
        node_ppr.update_trackers(&g, events, &pre_degrees)?;
        timings.tracker_s += secs(clock.elapsed());

        if config.mode.node() {
            let clock = Instant::now();
            let reps: Vec<NodeRepresentation> =
                node_ppr.trackers().iter().map(|s| reducer.represent(&s.p)).collect();
            timings.represent_s += secs(clock.elapsed());
            let clock = Instant::now();
            for (i, (before, now)) in prev_reps.iter().zip(&reps).enumerate() {
                node_rows.push((i, *t, node_score(before, now, config.p_norm)?));
            }
            timings.score_s += secs(clock.elapsed());
            record_reps(*t, &reps, &mut dump);
            prev_reps = reps;
        }

        if config.mode.graph() {
            let clock = Instant::now();
            graph_ppr.update_trackers(&g, events, &pre_degrees)?;
            let cur = graph_ppr.estimates();
            let members: Vec<NodeId> = graph_ppr.trackers().iter().map(|s| s.source).collect();
            let prev_map: HashMap<NodeId, SparseVec> = members.iter().copied().zip(prev_graph).collect();
            let cur_map: HashMap<NodeId, SparseVec> = members.iter().copied().zip(cur.iter().cloned()).collect();
            graph_scores.push((*t, graph_score(&prev_map, &cur_map, &tracking)));

            let fresh = tracking.update(&g);
            graph_ppr.add_sources(&fresh, params, &g);
            prev_graph = cur;
            prev_graph.extend(graph_ppr.trackers()[members.len()..].iter().map(|s| s.p.clone()));
            timings.graph_tracker_s += secs(clock.elapsed());
        }
    }

    node_rows.sort_by(|a, b| tracked_names[a.0].cmp(&tracked_names[b.0]).then(a.1.cmp(&b.1)));
    let node_scores: Vec<NodeScoreRow> = node_rows
        .into_iter()
        .map(|(i, snapshot, score)| NodeScoreRow {
            node: tracked_names[i].clone(),
            snapshot,
            score,
        })
        .collect();

    let counts = Counts {
        nodes: id_space,
        events: stream.events.len(),
        initial_events: initial.len(),
        snapshots: snapshots.len(),
        tracked_nodes: sources.len(),
        graph_tracked_nodes: tracking.len(),
        node_score_rows: node_scores.len(),
        graph_score_rows: graph_scores.len(),
    };
    let manifest = Manifest {
        config: config.clone(),
        seeds: Seeds {
            bucket: config.seed_bucket,
            sign: config.seed_sign,
            rng: config.seed_rng,
        },
        derived: Derived {
            epsilon: params.epsilon,
            epsilon_c: reducer.epsilon_c,
            representation_mode: reducer.mode,
            id_space,
        },
        counts,
        timings,
    };
    Ok(RunOutput {
        node_scores,
        graph_scores,
        representations: dump,
        manifest,
    })
}

pub const NODE_SCORES_FILE: &str = "node_scores.csv";
pub const GRAPH_SCORES_FILE: &str = "graph_scores.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPRESENTATIONS_FILE: &str = "representations.csv";

impl RunOutput {
    pub fn node_scores_csv(&self) -> String {
        let mut out = String::from("node,snapshot,score\n");
        for r in &self.node_scores {
            let _ = writeln!(out, "{},{},{}", r.node, r.snapshot, r.score);
        }
        out
    }

    pub fn graph_scores_csv(&self) -> String {
        let mut out = String::from("snapshot,score\n");
        for (t, s) in &self.graph_scores {
            let _ = writeln!(out, "{t},{s}");
        }
        out
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n"
    }

    /// Writes score CSVs for the enabled levels, the manifest, and the
    /// representation dump when present.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> io::Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mode = self.manifest.config.mode;
        if mode.node() {
            fs::write(dir.join(NODE_SCORES_FILE), self.node_scores_csv())?;
        }
        if mode.graph() {
            fs::write(dir.join(GRAPH_SCORES_FILE), self.graph_scores_csv())?;
        }
        if let Some(lines) = &self.representations {
            let mut w = io::BufWriter::new(fs::File::create(dir.join(REPRESENTATIONS_FILE))?);
            writeln!(w, "source,snapshot,mode,entries")?;
            for l in lines {
                writeln!(w, "{l}")?;
            }
            w.flush()?;
        }
        fs::write(dir.join(MANIFEST_FILE), self.manifest_json())
    }
}

/// Reads a `node,snapshot,score` file.
pub fn parse_node_scores(text: &str) -> Result<Vec<(String, u64, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.starts_with("node,") || line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.to_owned(),
        };
        let mut parts = line.rsplitn(3, ',');
        let score = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(|| err("bad score"))?;
        let snapshot = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(|| err("bad snapshot"))?;
        let node = parts.next().ok_or_else(|| err("missing node"))?;
        out.push((node.to_owned(), snapshot, score));
    }
    Ok(out)
}

/// Reads a `snapshot,score` file.
pub fn parse_graph_scores(text: &str) -> Result<Vec<(u64, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.starts_with("snapshot,") || line.trim().is_empty() {
            continue;
        }
        let parsed = line
            .split_once(',')
            .and_then(|(t, s)| Some((t.trim().parse().ok()?, s.trim().parse().ok()?)));
        out.push(parsed.ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: "expected snapshot,score".into(),
        })?);
    }
    Ok(out)
}

/// Tolerance for the degree-balance invariant.
pub const INVARIANT_TOL: f64 = 1e-8;
/// Additive slack on the ε·vol(G) approximation bound.
pub const ORACLE_SLACK: f64 = 1e-6;
pub const DEFAULT_ORACLE_CAP: usize = 2000;

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub node_cap: usize,
    /// Sources checked when the config tracks none: the top nodes by degree
    /// in the initial graph.
    pub default_sources: usize,
    /// Perturbs the first tracker after its initial push (testing aid).
    pub corrupt_tracker: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            node_cap: DEFAULT_ORACLE_CAP,
            default_sources: 5,
            corrupt_tracker: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CheckReport {
    pub sources: usize,
    pub snapshots: usize,
    pub max_invariant_residual: f64,
    pub invariant_tol: f64,
    pub max_oracle_gap: f64,
    /// Largest `gap − (ε·vol + slack)` seen; positive means violation.
    pub max_oracle_excess: f64,
    pub max_threshold_ratio: f64,
    pub dynamic_static_gap: f64,
    pub dynamic_static_bound: f64,
    pub passed: bool,
}

/// Replays `stream` with the configured push parameters and checks every
/// tracker against the degree-balance invariant, the power-iteration oracle
/// and a from-scratch push on the final graph.
pub fn check(config: &RunConfig, stream: &EventStream, opts: &CheckOptions) -> Result<CheckReport> {
    config.validate()?;
    let params = config.push_params()?;
    let stream = if config.undirected {
        stream.mirrored()
    } else {
        stream.clone()
    };
    if stream.names.len() > opts.node_cap {
        return Err(Error::CapExceeded {
            nodes: stream.names.len(),
            cap: opts.node_cap,
        });
    }
    let Batches { initial, snapshots } = stream.batches(config.init_snapshot);
    let mut g = Graph::with_nodes(stream.names.len());
    for e in &initial {
        g.apply_event(e)?;
    }

    let named = config.resolve_tracked()?;
    let sources = if named.is_empty() {
        let mut ranked: Vec<NodeId> = (0..g.node_count() as u32).map(NodeId).filter(|&u| g.degree(u) > 0.0).collect();
        ranked.sort_by(|a, b| g.degree(*b).total_cmp(&g.degree(*a)).then(a.cmp(b)));
        ranked.truncate(opts.default_sources);
        ranked
    } else {
        resolve_sources(&named, &stream)?
    };

    let mut ppr = IncrementalPpr::new();
    ppr.add_sources(&sources, params, &g);
    if opts.corrupt_tracker {
        if let Some(state) = ppr.trackers_mut().first_mut() {
            let s = state.source;
            state.p.add(s, 0.25);
        }
    }

    let iters = oracle_iterations(params.alpha, 1e-13);
    let mut report = CheckReport {
        sources: sources.len(),
        snapshots: snapshots.len(),
        invariant_tol: INVARIANT_TOL,
        ..Default::default()
    };
    let inspect = |g: &Graph, trackers: &[TrackerState], report: &mut CheckReport| {
        let bound = params.epsilon * g.volume() + ORACLE_SLACK;
        for state in trackers {
            report.max_invariant_residual = report.max_invariant_residual.max(state.invariant_residual(g));
            report.max_threshold_ratio = report.max_threshold_ratio.max(state.max_threshold_ratio(g));
            let pi = power_iteration_oracle(g, state.source, params.alpha, iters);
            let gap = l1_gap(&state.p, &pi);
            report.max_oracle_gap = report.max_oracle_gap.max(gap);
            report.max_oracle_excess = report.max_oracle_excess.max(gap - bound);
        }
    };
    report.max_oracle_excess = f64::NEG_INFINITY;
    inspect(&g, ppr.trackers(), &mut report);
    for (_, events) in &snapshots {
        ppr.apply_batch(&mut g, events)?;
        inspect(&g, ppr.trackers(), &mut report);
    }
    if sources.is_empty() {
        report.max_oracle_excess = 0.0;
    }

    report.dynamic_static_bound = 2.0 * params.epsilon * g.volume();
    for state in ppr.trackers() {
        let mut fresh = TrackerState::new(state.source, params);
        fresh.push(&g);
        report.dynamic_static_gap = report.dynamic_static_gap.max(fresh.p.l1_distance(&state.p));
    }
    report.passed = report.max_invariant_residual <= INVARIANT_TOL
        && report.max_oracle_excess <= 0.0
        && report.dynamic_static_gap <= report.dynamic_static_bound + ORACLE_SLACK;
    Ok(report)
}
