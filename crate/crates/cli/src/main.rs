mod prescribe;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use loadbench_core::series::{format_timestamp, load_csv_with_repairs, HourlySeries};
use loadbench_harness::aggregate::{model_order, rank_models};
use loadbench_harness::config::parse_instant;
use loadbench_harness::eia::EiaClient;
use loadbench_harness::report::emit_report;
use loadbench_harness::{plan_sweep, run_sweep, Registry, Store, SweepConfig};

#[derive(Parser)]
#[command(name = "loadbench", version, about = "Hourly load forecasting benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download hourly ERCOT demand into a CSV cache directory.
    Fetch {
        #[arg(long)]
        start: String,
        #[arg(long)]
        end: String,
        /// Cache directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute (or resume) a sweep into a result store.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Store directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Series CSV overriding the config's data section.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write tables, figure data and significance tests from a store.
    Report {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn one forecast into operational decisions.
    Prescribe(prescribe::Args),
    /// Print the composite model ranking for a store.
    Rank {
        #[arg(long)]
        store: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Fetch { start, end, out } => fetch(&start, &end, &out).map(|_| ExitCode::SUCCESS),
        Command::Run {
            config,
            out,
            resume,
            parallelism,
            data,
        } => run(&config, &out, resume, parallelism, data.as_deref()),
        Command::Report { store, out } => {
            let store = Store::open(&store)?;
            let manifest = emit_report(&store, &out)?;
            for w in &manifest.warnings {
                log::warn!("{w}");
            }
            println!("{} records, {} files written to {}", manifest.records, manifest.files.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Prescribe(args) => prescribe::run(args).map(|_| ExitCode::SUCCESS),
        Command::Rank { store } => rank(&store).map(|_| ExitCode::SUCCESS),
    }
}

fn fetch(start: &str, end: &str, out: &Path) -> Result<()> {
    let start = parse_instant(start)?;
    let end = parse_instant(end)?;
    let client = EiaClient::from_env(out)?;
    let series = client.fetch(start, end)?;
    println!(
        "{} hours {}..{} in {}",
        series.len(),
        format_timestamp(series.start()),
        format_timestamp(series.end()),
        client.cache_path(start, end).display()
    );
    Ok(())
}

fn load_series(config: &SweepConfig, data: Option<&Path>) -> Result<HourlySeries<f64>> {
    if let Some(path) = data.or(config.data.csv.as_deref()) {
        let (series, repaired) =
            load_csv_with_repairs(path).with_context(|| format!("loading {}", path.display()))?;
        if repaired > 0 {
            log::warn!("{}: interpolated {repaired} missing value(s)", path.display());
        }
        return Ok(series);
    }
    let (start, end) = config.data.range()?;
    let client = EiaClient::from_env(&config.data.cache_dir)?;
    Ok(client.fetch(start, end)?)
}

fn run(config_path: &Path, out: &Path, resume: bool, parallelism: Option<usize>, data: Option<&Path>) -> Result<ExitCode> {
    let config = SweepConfig::load(config_path)?;
    let mut store = Store::open(out)?;
    if !store.is_empty() || store.read_config()?.is_some() {
        if !resume {
            bail!("{} already holds results; pass --resume to continue it", out.display());
        }
        if let Some(previous) = store.read_config()? {
            if previous != config {
                bail!("config differs from the one stored in {}", out.display());
            }
        }
    }
    let series = load_series(&config, data)?;
    let registry = Registry::from_config(&config)?;
    let plan = plan_sweep(&config, &series)?;
    store.write_config(&config)?;
    log::info!("{} tasks planned, {} already stored", plan.len(), store.len());
    let summary = run_sweep(&plan, &series, &registry, &config, &mut store, parallelism.or(config.parallelism))?;
    println!(
        "planned {} skipped {} executed {} failed {} infrastructure_errors {}",
        summary.planned, summary.skipped, summary.executed, summary.failed, summary.infrastructure_errors
    );
    if summary.infrastructure_errors > 0 {
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn rank(store_dir: &Path) -> Result<()> {
    let store = Store::open(store_dir)?;
    let config = store.read_config()?;
    let records = store.to_vec();
    let models = model_order(&records, config.as_ref());
    let tables = config.map(|c| c.tables).unwrap_or_default();
    let ranked = rank_models(&records, &models, &tables)?;
    for m in &models {
        if !ranked.iter().any(|r| &r.model == m) {
            eprintln!("not ranked: {m} (missing coverage, CRPS, per-period MASE or timing)");
        }
    }
    println!("{:<20} {:>8} {:>6} {:>10} {:>7} {:>9}", "model", "coverage", "crps", "robustness", "latency", "composite");
    for r in ranked {
        println!(
            "{:<20} {:>8} {:>6} {:>10} {:>7} {:>9}",
            r.model, r.ranks[0], r.ranks[1], r.ranks[2], r.ranks[3], r.composite
        );
    }
    Ok(())
}
