use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use recollect::replay::{
    eval_recall, generate_workload, parse_log, replay, RecallSpec, ReplayError, ReplayOptions, WorkloadParams,
};
use recollect::snapshot::read_snapshot;
use recollect::{Engine, EngineConfig, EngineError, EntryKind};

#[derive(Parser)]
#[command(name = "recollect", version, about = "Long-term conversational memory: replay, benchmark and inspect")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `rng_seed` (and the workload seed for `generate`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic log (`log.txt`) and recall spec (`recall.txt`).
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 38)]
        users: usize,
        #[arg(long, default_value_t = 28)]
        days: u32,
        #[arg(long, default_value_t = 7.9)]
        conv_per_day: f64,
        /// Total user plus companion turns; 0 draws turns per conversation instead.
        #[arg(long, default_value_t = 11_504)]
        turns: u64,
    },
    /// Replay a log; writes metrics.csv, trace.csv, snapshot.txt, journal.log.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Disable compaction and pruning.
        #[arg(long)]
        no_compression: bool,
    },
    /// Search a snapshot.
    Query {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        user: Option<String>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// CSV output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recall of important and minor events against a snapshot.
    Recall {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-user store statistics of a snapshot.
    Stats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one compaction pass and watermark check on a journaled store.
    Compact {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        journal: PathBuf,
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Pass time (Unix seconds); defaults to the store's clock.
        #[arg(long)]
        now: Option<i64>,
        /// Where to write the resulting snapshot.
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_INPUT: u8 = 2;
const EXIT_INVARIANT: u8 = 3;
const EXIT_UNDEFINED: u8 = 4;

/// Errors carrying their own exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn load_config(common: &Common) -> Result<EngineConfig> {
    let mut config = match &common.config {
        Some(p) => EngineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => EngineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.rng_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            common,
            out,
            users,
            days,
            conv_per_day,
            turns,
        } => {
            let config = load_config(&common)?;
            let params = WorkloadParams {
                seed: common.seed.unwrap_or(config.rng_seed),
                users,
                days,
                conv_per_day,
                target_turns: (turns > 0).then_some(turns),
                ..WorkloadParams::default()
            };
            if users == 0 || conv_per_day <= 0.0 {
                bail!(Exit(EXIT_INPUT, "users and conv_per_day must be positive".into()));
            }
            let w = generate_workload(&params);
            fs::create_dir_all(&out)?;
            fs::write(out.join("log.txt"), recollect::replay::encode_log(&w.events))?;
            fs::write(out.join("recall.txt"), w.recall.encode())?;
            println!("events={} turns={} recall_items={}", w.events.len(), w.turns, w.recall.items.len());
        }
        Command::Replay {
            common,
            log,
            out,
            no_compression,
        } => {
            let config = load_config(&common)?;
            let text = fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            let events = parse_log(&text)?;
            fs::create_dir_all(&out)?;
            let options = ReplayOptions {
                compression: !no_compression,
                check_invariants: true,
                journal: Some(out.join("journal.log")),
            };
            let outcome = replay(&events, config, &options)?;
            fs::write(out.join("metrics.csv"), outcome.metrics_csv()?)?;
            fs::write(out.join("trace.csv"), outcome.trace_csv()?)?;
            outcome.engine.write_snapshot(&out.join("snapshot.txt"))?;
            let last = outcome.metrics.last();
            println!(
                "days={} entries_live={} bytes_live={} bytes_baseline={} ratio={:.4}",
                outcome.metrics.len(),
                last.map_or(0, |m| m.entries_live),
                last.map_or(0, |m| m.bytes_live),
                last.map_or(0, |m| m.bytes_baseline),
                outcome.final_ratio()
            );
        }
        Command::Query {
            common,
            snapshot,
            text,
            user,
            k,
            out,
        } => {
            let config = load_config(&common)?;
            if k == 0 {
                bail!(Exit(EXIT_INPUT, "k must be at least 1".into()));
            }
            let state = read_snapshot(&snapshot, &config)?;
            let hits = state.index().search(user.as_deref(), &text, k, config.retrieval_alpha);
            let rows = hits
                .iter()
                .enumerate()
                .map(|(i, h)| {
                    let e = state.get(h.id).expect("hit is live");
                    vec![
                        (i + 1).to_string(),
                        h.id.to_string(),
                        format!("{:.6}", h.score),
                        e.kind.to_string(),
                        e.user_id.clone(),
                        e.text.clone(),
                    ]
                })
                .collect();
            let csv = csv_text(&["rank", "id", "score", "kind", "user", "text"], rows)?;
            emit(out.as_deref(), &csv)?;
        }
        Command::Recall {
            common,
            snapshot,
            spec,
            k,
            out,
        } => {
            let config = load_config(&common)?;
            let state = read_snapshot(&snapshot, &config)?;
            let spec = RecallSpec::parse(&fs::read_to_string(&spec)?)?;
            let r = eval_recall(&state, &spec, k)?;
            let csv = csv_text(
                &["k", "recall_important", "recall_minor", "important_hits", "important_total", "minor_hits", "minor_total"],
                vec![vec![
                    k.to_string(),
                    format!("{:.6}", r.important),
                    format!("{:.6}", r.minor),
                    r.important_hits.to_string(),
                    r.important_total.to_string(),
                    r.minor_hits.to_string(),
                    r.minor_total.to_string(),
                ]],
            )?;
            emit(out.as_deref(), &csv)?;
            if !r.is_defined() {
                bail!(Exit(EXIT_UNDEFINED, "recall undefined: no marked events of some class".into()));
            }
        }
        Command::Stats { common, snapshot, out } => {
            let config = load_config(&common)?;
            let state = read_snapshot(&snapshot, &config)?;
            let rows = state
                .users()
                .keys()
                .map(|user| {
                    let es = state.user_entries(user);
                    let count = |k: EntryKind| es.iter().filter(|e| e.kind == k).count().to_string();
                    vec![
                        user.clone(),
                        es.len().to_string(),
                        count(EntryKind::Raw),
                        count(EntryKind::Summary),
                        count(EntryKind::Meta),
                        es.iter().filter(|e| e.pinned).count().to_string(),
                        state.store_bytes(user).to_string(),
                    ]
                })
                .collect();
            let csv = csv_text(&["user", "entries", "raw", "summary", "meta", "pinned", "bytes"], rows)?;
            emit(out.as_deref(), &csv)?;
        }
        Command::Compact {
            common,
            journal,
            snapshot,
            now,
            out,
        } => {
            let config = load_config(&common)?;
            let mut engine = Engine::open(config, &journal, snapshot.as_deref())?;
            let Some(now) = now.or(engine.state().clock()) else {
                bail!(Exit(EXIT_INPUT, "empty store and no --now given".into()));
            };
            let report = engine.compact(now)?;
            let prunes = engine.prune_if_needed(now)?;
            engine
                .state()
                .check_invariants(true)
                .map_err(|m| Exit(EXIT_INVARIANT, m))?;
            engine.write_snapshot(&out)?;
            println!(
                "merges={} bytes_before={} bytes_after={} prunes={}",
                report.merges.len(),
                report.bytes_before,
                report.bytes_after,
                prunes.iter().filter(|p| !p.pruned_ids.is_empty()).count()
            );
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(Exit(code, _)) = err.downcast_ref::<Exit>() {
        return *code;
    }
    let invariant = match err.downcast_ref::<ReplayError>() {
        Some(ReplayError::Invariant { .. }) | Some(ReplayError::Engine(EngineError::Invariant(_))) => true,
        _ => matches!(err.downcast_ref::<EngineError>(), Some(EngineError::Invariant(_))),
    };
    if invariant {
        EXIT_INVARIANT
    } else {
        EXIT_INPUT
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
