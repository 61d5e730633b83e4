use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tracing::Level;
use wikistance::experiments::{
    emit_table, evaluate_run, prepare, run_experiment, table_cells, AvgPlacement, ExperimentConfig, ExperimentError,
    RunOptions, REPORT_JSON,
};
use wikistance::knowledge::{KnowledgeCache, KnowledgeResolver, RateLimiter, TargetPageMap, WikipediaSource};
use wikistance::model::WsBert;

#[derive(Parser)]
#[command(name = "wikistance", version, about = "Stance detection with Wikipedia background knowledge")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Knowledge cache maintenance.
    Knowledge {
        #[command(subcommand)]
        command: KnowledgeCommand,
    },
    /// Train (with grid search if configured) without touching the test split.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Print the first N encoded training inputs and exit.
        #[arg(long, value_name = "N")]
        dump_streams: Option<usize>,
    },
    /// Full pipeline: knowledge, splits, training, test evaluation.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_name = "N")]
        dump_streams: Option<usize>,
    },
    /// Evaluate a finished run directory on its test split.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
    },
    /// Results table from report.json files or run directories.
    Table {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Put methods in columns and targets in rows.
        #[arg(long)]
        transpose: bool,
        #[arg(long, value_enum, default_value_t = Avg::Column)]
        avg: Avg,
    },
}

#[derive(Subcommand)]
enum KnowledgeCommand {
    /// Resolve targets to knowledge records and store them in the cache.
    Fetch {
        /// File with one target per line; `#` starts a comment.
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        /// Tab-separated target/page-title overrides.
        #[arg(long)]
        manual_map: Option<PathBuf>,
        #[arg(long)]
        offline: bool,
        #[arg(long, default_value_t = 200)]
        rate_ms: u64,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long)]
        endpoint: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Avg {
    Column,
    Row,
    None,
}

/// An error tagged with the pipeline stage it came from.
struct Failure {
    stage: String,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let stage = error.downcast_ref::<ExperimentError>().map_or_else(|| "cli".to_string(), ExperimentError::stage_name);
        Failure { stage, error }
    }
}

fn at(stage: &str) -> impl FnOnce(anyhow::Error) -> Failure + '_ {
    move |error| Failure { stage: stage.to_string(), error }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => Level::WARN,
        1 => Level::INFO,
        2 => Level::DEBUG,
        _ => Level::TRACE,
    };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}]: {:#}", f.stage, f.error);
            ExitCode::FAILURE
        }
    }
}

fn invocation() -> Vec<String> {
    std::env::args().collect()
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Knowledge { command: KnowledgeCommand::Fetch { targets, cache, manual_map, offline, rate_ms, parallelism, endpoint } } => {
            fetch(&targets, &cache, manual_map.as_deref(), offline, rate_ms, parallelism, endpoint.as_deref())
                .map_err(at("knowledge"))
        }
        Command::Train { config, out, dump_streams } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.output_dir = out;
            if let Some(n) = dump_streams {
                return dump(&cfg, n);
            }
            let o = run_experiment(&cfg, RunOptions { invocation: invocation(), skip_test: true, ..Default::default() })?;
            println!(
                "best epoch {} of {} (validation F_avg {:.4}); run written to {}",
                o.history.best_epoch,
                o.history.stopped_epoch,
                o.history.best_metric(),
                o.output_dir.display()
            );
            Ok(())
        }
        Command::Run { config, out, dump_streams } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(n) = dump_streams {
                return dump(&cfg, n);
            }
            let o = run_experiment(&cfg, RunOptions { invocation: invocation(), ..Default::default() })?;
            print!("{}", fs::read_to_string(o.output_dir.join(wikistance::experiments::REPORT_TXT)).unwrap_or_default());
            println!("run written to {}", o.output_dir.display());
            Ok(())
        }
        Command::Evaluate { run } => {
            for r in evaluate_run(&run)? {
                println!("{}: n={} F_avg={:.4}", r.subset.as_str(), r.count, r.f_avg);
            }
            Ok(())
        }
        Command::Table { reports, transpose, avg } => {
            let mut cells = Vec::new();
            for path in &reports {
                let file = if path.is_dir() { path.join(REPORT_JSON) } else { path.clone() };
                let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display())).map_err(at("table"))?;
                let doc: serde_json::Value =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display())).map_err(at("table"))?;
                cells.extend(table_cells(&doc)?);
            }
            if transpose {
                cells = cells.into_iter().map(|c| c.transposed()).collect();
            }
            let placement = match avg {
                Avg::Column => AvgPlacement::Column,
                Avg::Row => AvgPlacement::Row,
                Avg::None => AvgPlacement::None,
            };
            let corner = if transpose { "Target" } else { "Method" };
            print!("{}", emit_table(&cells, corner, placement)?);
            Ok(())
        }
    }
}

fn fetch(
    targets: &Path,
    cache: &Path,
    manual_map: Option<&Path>,
    offline: bool,
    rate_ms: u64,
    parallelism: usize,
    endpoint: Option<&str>,
) -> anyhow::Result<()> {
    let text = fs::read_to_string(targets).with_context(|| format!("reading {}", targets.display()))?;
    let list: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect();
    let offline = offline || wikistance::knowledge::offline_from_env();
    let mut resolver = KnowledgeResolver::new(KnowledgeCache::open(cache)?)
        .offline(offline)
        .with_parallelism(parallelism.max(1))
        .with_rate_limiter(RateLimiter::new(Duration::from_millis(rate_ms)));
    if let Some(m) = manual_map {
        resolver = resolver.with_manual_map(TargetPageMap::load(m)?);
    }
    if !offline {
        let source = match endpoint {
            Some(url) => WikipediaSource::with_endpoint(url)?,
            None => WikipediaSource::new()?,
        };
        resolver = resolver.with_source(Box::new(source));
    }
    let result = resolver.bulk_resolve(&list);
    for entry in &result.entries {
        match entry {
            Ok(r) => println!("{}\t{}\t{}", r.status.as_str(), r.target, r.page_title.as_deref().unwrap_or("-")),
            Err(f) => println!("failed\t{}\t{}", f.target, f.reason),
        }
    }
    let failures = result.failures().len();
    eprintln!(
        "{} target(s), {} resolved, {} failed, {} upstream lookup(s)",
        list.len(),
        list.len() - failures,
        failures,
        resolver.upstream_lookups()
    );
    if failures > 0 {
        bail!("{failures} target(s) could not be resolved");
    }
    Ok(())
}

fn dump(cfg: &ExperimentConfig, n: usize) -> Result<(), Failure> {
    let prepared = prepare(cfg, None)?;
    let model = WsBert::new(&cfg.model, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).map_err(|e| at("model")(e.into()))?;
    let encoder = model.input_encoder();
    for e in prepared.train().into_iter().take(n) {
        let set = prepared.encode(&encoder, &[e])?;
        println!("# {} ({})", e.example_id, e.label.as_str());
        for (i, s) in encoder.describe(&set.inputs[0]).map_err(|e| at("encoding")(e.into()))?.iter().enumerate() {
            println!("stream {i}: {s}");
        }
    }
    Ok(())
}
