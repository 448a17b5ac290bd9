//! Tab-separated edge event streams.
//!
//! One event per line: `snapshot_id<TAB>src<TAB>dst<TAB>delta_weight`.
//! Lines starting with `#` and blank lines are skipped. Snapshot ids must
//! be non-decreasing.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{mirror_stream, EdgeEvent, NodeInterner};

#[derive(Debug, Clone, Default)]
pub struct EventStream {
    pub names: NodeInterner,
    pub events: Vec<EdgeEvent>,
}

/// Events split at the initial snapshot: everything at or before it builds
/// the starting graph, later snapshots become batches.
#[derive(Debug, Clone, Default)]
pub struct Batches {
    pub initial: Vec<EdgeEvent>,
    /// One entry per snapshot id after the initial one, empty ones included.
    pub snapshots: Vec<(u64, Vec<EdgeEvent>)>,
}

impl EventStream {
    pub fn parse(text: &str) -> Result<Self> {
        let mut stream = EventStream::default();
        let mut last = 0u64;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse { line, msg };
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
            }
            let snapshot: u64 = fields[0]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad snapshot id {:?}", fields[0])))?;
            let delta: f64 = fields[3]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad weight delta {:?}", fields[3])))?;
            if delta == 0.0 || !delta.is_finite() {
                return Err(err(format!("weight delta must be finite and nonzero, got {delta}")));
            }
            if snapshot < last {
                return Err(err(format!("snapshot {snapshot} follows snapshot {last}")));
            }
            last = snapshot;
            let (src, dst) = (fields[1].trim(), fields[2].trim());
            if src.is_empty() || dst.is_empty() {
                return Err(err("empty node id".into()));
            }
            let src = stream.names.intern(src);
            let dst = stream.names.intern(dst);
            stream.events.push(EdgeEvent::new(src, dst, delta, snapshot));
        }
        Ok(stream)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        for e in &self.events {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                e.snapshot,
                self.names.name(e.src),
                self.names.name(e.dst),
                e.delta
            )?;
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = io::BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn max_snapshot(&self) -> Option<u64> {
        self.events.last().map(|e| e.snapshot)
    }

    /// Each event followed by its reverse.
    pub fn mirrored(&self) -> Self {
        Self {
            names: self.names.clone(),
            events: mirror_stream(&self.events),
        }
    }

    pub fn batches(&self, init_snapshot: u64) -> Batches {
        let mut out = Batches::default();
        let last = self.max_snapshot().unwrap_or(init_snapshot).max(init_snapshot);
        out.snapshots = (init_snapshot + 1..=last).map(|t| (t, Vec::new())).collect();
        for e in &self.events {
            if e.snapshot <= init_snapshot {
                out.initial.push(*e);
            } else {
                out.snapshots[(e.snapshot - init_snapshot - 1) as usize].1.push(*e);
            }
        }
        out
    }
}

/// Node ids, one per line; `#` comments and blank lines skipped.
pub fn parse_node_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}
