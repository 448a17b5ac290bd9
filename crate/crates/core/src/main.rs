use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ppr_anomaly::config::{RunConfig, ScoreMode};
use ppr_anomaly::eval::{group_scores, pr_sweep, precision_at_k, precision_avg, random_baseline};
use ppr_anomaly::injection::{inject, GroundTruth, InjectionKind, InjectionPlan};
use ppr_anomaly::pipeline::{self, CheckOptions};
use ppr_anomaly::stream::EventStream;
use ppr_anomaly::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "ppr-anomaly", version, about = "Track Personalized PageRank over edge streams and score anomalies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track PPVs through the stream and write node/graph score CSVs plus a manifest.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay the stream and verify trackers against the power-iteration oracle.
    Check {
        #[command(flatten)]
        config: ConfigArgs,
        /// Largest node count the dense oracle accepts.
        #[arg(long, default_value_t = pipeline::DEFAULT_ORACLE_CAP)]
        cap: usize,
        /// Sources to check when no tracked nodes are given (top by degree).
        #[arg(long, default_value_t = 5)]
        sources: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt_tracker: bool,
    },
    /// Inject synthetic star or link anomalies into a stream.
    Inject {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out_events: PathBuf,
        #[arg(long)]
        out_truth: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Explicit snapshot ids; otherwise `--num-snapshots` are drawn at random.
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<u64>,
        #[arg(long, default_value_t = InjectionPlan::DEFAULT_SNAPSHOT_COUNT)]
        num_snapshots: usize,
        #[arg(long, default_value_t = 70)]
        edges_per_injection: usize,
        #[arg(long, default_value_t = 10)]
        targets_per_star: usize,
        #[arg(long, default_value_t = 5)]
        pairs_per_link: usize,
        #[arg(long, default_value_t = 0.01)]
        high_degree_quantile: f64,
        #[arg(long, default_value_t = 0)]
        init_snapshot: u64,
    },
    /// Evaluate score files against ground truth and print metrics JSON.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum, default_value_t = Level::Node)]
        level: Level,
        /// Graph level: top-k cutoff (defaults to the number of labeled snapshots).
        #[arg(long)]
        k: Option<usize>,
        /// Graph level: k values for the precision-recall sweep (default 1..=all).
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        /// Node level: seeds averaged for the random-score baseline.
        #[arg(long, default_value_t = 100)]
        baseline_seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Kind {
    Star,
    Link,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Level {
    Node,
    Graph,
}

/// Flags mirroring [`RunConfig`] fields; each overrides the config file.
#[derive(Args)]
struct ConfigArgs {
    /// Event stream TSV.
    #[arg(long)]
    events: PathBuf,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epsilon_c: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    p_norm: Option<u32>,
    #[arg(long, value_enum)]
    mode: Option<ScoreMode>,
    #[arg(long)]
    graph_topk: Option<usize>,
    #[arg(long)]
    undirected: bool,
    #[arg(long)]
    seed_bucket: Option<u32>,
    #[arg(long)]
    seed_sign: Option<u32>,
    #[arg(long)]
    seed_rng: Option<u64>,
    /// Comma-separated tracked node ids.
    #[arg(long, value_delimiter = ',')]
    tracked_nodes: Vec<String>,
    /// File with one tracked node id per line.
    #[arg(long)]
    tracked_file: Option<PathBuf>,
    #[arg(long)]
    force_hashed: bool,
    #[arg(long)]
    no_log_floor: bool,
    #[arg(long)]
    init_snapshot: Option<u64>,
    #[arg(long)]
    dump_representations: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    c.$field = v;
                }
            )*};
        }
        set!(alpha, epsilon, dim, p_norm, mode, graph_topk, seed_bucket, seed_sign, seed_rng, init_snapshot);
        if self.epsilon_c.is_some() {
            c.epsilon_c = self.epsilon_c;
        }
        if self.tracked_file.is_some() {
            c.tracked_file = self.tracked_file.clone();
        }
        if !self.tracked_nodes.is_empty() {
            c.tracked_nodes = self.tracked_nodes.clone();
        }
        c.undirected |= self.undirected;
        c.force_hashed |= self.force_hashed;
        c.log_floor &= !self.no_log_floor;
        c.dump_representations |= self.dump_representations;
        c.validate()?;
        Ok(c)
    }
}

enum Failure {
    Usage(String),
    Data(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e.root() {
            Error::Config(_) => Failure::Usage(e.to_string()),
            Error::Invariant(_) => Failure::Invariant(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, out } => {
            let cfg = config.resolve()?;
            let clock = Instant::now();
            let stream = EventStream::read(&config.events)?;
            let read_s = clock.elapsed().as_secs_f64();
            let mut output = pipeline::run(&cfg, &stream)?;
            output.manifest.timings.ingest_s += read_s;
            output.write_dir(&out)?;
        }
        Command::Check {
            config,
            cap,
            sources,
            report,
            corrupt_tracker,
        } => {
            let cfg = config.resolve()?;
            let stream = EventStream::read(&config.events)?;
            let opts = CheckOptions {
                node_cap: cap,
                default_sources: sources,
                corrupt_tracker,
            };
            let result = pipeline::check(&cfg, &stream, &opts)?;
            let text = serde_json::to_string_pretty(&result).expect("report serializes") + "\n";
            emit(&text, report.as_ref())?;
            if !result.passed {
                return Err(Failure::Invariant("invariant check failed".into()));
            }
        }
        Command::Inject {
            events,
            kind,
            out_events,
            out_truth,
            seed,
            snapshots,
            num_snapshots,
            edges_per_injection,
            targets_per_star,
            pairs_per_link,
            high_degree_quantile,
            init_snapshot,
        } => {
            let stream = EventStream::read(&events)?;
            let kind = match kind {
                Kind::Star => InjectionKind::Star,
                Kind::Link => InjectionKind::Link,
            };
            let mut plan = InjectionPlan {
                edges_per_injection,
                targets_per_star,
                pairs_per_link,
                high_degree_quantile,
                ..InjectionPlan::new(kind, seed)
            };
            if snapshots.is_empty() {
                let last = stream.max_snapshot().unwrap_or(init_snapshot);
                plan = plan.with_random_snapshots(init_snapshot + 1, last, num_snapshots)?;
            } else {
                plan.snapshots = snapshots.into_iter().collect();
            }
            let (injected, truth) = inject(&stream, &plan, init_snapshot)?;
            injected.write(&out_events)?;
            truth.write(&out_truth)?;
        }
        Command::Eval {
            scores,
            truth,
            level,
            k,
            ks,
            baseline_seeds,
            out,
        } => {
            let truth = GroundTruth::read(&truth)?;
            let text = fs::read_to_string(&scores)?;
            let metrics = match level {
                Level::Node => {
                    let grouped = group_scores(pipeline::parse_node_scores(&text)?);
                    let precision = precision_avg(&grouped, &truth)?;
                    let snapshots: BTreeSet<u64> =
                        grouped.values().flatten().map(|&(t, _)| t).collect();
                    let snapshots: Vec<u64> = snapshots.into_iter().collect();
                    let labeled: Vec<String> = truth.labels.keys().cloned().collect();
                    let baseline = if baseline_seeds == 0 || labeled.is_empty() {
                        None
                    } else {
                        let total: f64 = (0..baseline_seeds)
                            .map(|seed| precision_avg(&random_baseline(&labeled, &snapshots, seed), &truth))
                            .sum::<Result<f64, Error>>()?;
                        Some(total / baseline_seeds as f64)
                    };
                    json!({
                        "level": "node",
                        "nodes": labeled.len(),
                        "snapshots": snapshots.len(),
                        "precision_avg": precision,
                        "random_baseline": baseline,
                        "random_baseline_seeds": baseline_seeds,
                    })
                }
                Level::Graph => {
                    let series = pipeline::parse_graph_scores(&text)?;
                    let positives = truth.snapshots();
                    let k = k.unwrap_or(positives.len()).min(series.len());
                    let ks: Vec<usize> = if ks.is_empty() { (1..=series.len()).collect() } else { ks };
                    json!({
                        "level": "graph",
                        "snapshots": series.len(),
                        "positives": positives.len(),
                        "k": k,
                        "precision_at_k": precision_at_k(&series, &positives, k),
                        "pr_sweep": pr_sweep(&series, &positives, &ks),
                    })
                }
            };
            let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n";
            emit(&text, out.as_ref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVARIANT)
        }
    }
}
