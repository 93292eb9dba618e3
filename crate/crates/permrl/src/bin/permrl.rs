//! Batch experiment CLI.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use permrl::envs::prices::{generate_synthetic_prices, write_prices};
use permrl::error::{Error, Result};
use permrl::harness::config::{condition_for_cli, parse_kv};
use permrl::harness::portfolio::{
    load_or_generate_prices, out_of_sample_tasks, run_portfolio, split_envs,
};
use permrl::harness::synthetic::run_synthetic_bound;
use permrl::harness::ExperimentConfig;
use permrl::policy::load_checkpoint;
use permrl::trainer::evaluate;

#[derive(Parser)]
#[command(name = "permrl", about = "Permutation-invariant multi-task allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training mode: stl | mtl-uniform | p-mtl (overrides `trainer.mode`).
    #[arg(long)]
    mode: Option<String>,
    /// Task count (overrides `portfolio.tasks`).
    #[arg(long)]
    tasks: Option<usize>,
    /// Additional key=value overrides, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample-efficiency curves on the synthetic allocation task.
    Synthetic(CommonArgs),
    /// Multi-task portfolio training experiment.
    Portfolio(CommonArgs),
    /// Generate a synthetic OHLC price CSV.
    GenPrices(CommonArgs),
    /// Evaluate a saved policy checkpoint on the held-out split.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Policy checkpoint written by the portfolio experiment.
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn build_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_map(&parse_kv(&text)?)?
        }
        None => ExperimentConfig::default(),
    };
    for entry in &args.set {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got '{entry}'")))?;
        cfg.apply(key.trim(), value.trim())?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(mode) = &args.mode {
        cfg.trainer.mode = mode.parse()?;
    }
    if let Some(tasks) = args.tasks {
        cfg.portfolio.task_count = tasks;
    }
    // --mode/--tasks collapse the condition sweep to a single condition.
    if args.mode.is_some() || args.tasks.is_some() {
        cfg.portfolio.conditions = vec![condition_for_cli(&cfg)];
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthetic(args) => run_synthetic_bound(&build_config(&args)?),
        Command::Portfolio(args) => run_portfolio(&build_config(&args)?),
        Command::GenPrices(args) => {
            let cfg = build_config(&args)?;
            let series = generate_synthetic_prices(&cfg.prices)?;
            let path = if cfg.out.extension().is_some() {
                cfg.out.clone()
            } else {
                std::fs::create_dir_all(&cfg.out)?;
                cfg.out.join("prices.csv")
            };
            write_prices(&series, &path)
        }
        Command::Eval { common, checkpoint } => {
            let cfg = build_config(&common)?;
            let policy = load_checkpoint(&checkpoint)?;
            let series = load_or_generate_prices(&cfg)?;
            let (_, test_env) = split_envs(&series, &cfg)?;
            let tasks = out_of_sample_tasks(&cfg, series.instrument_count())?;
            let records = evaluate(&test_env, &tasks, &policy)?;
            let report: Vec<serde_json::Value> = records
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "task_id": r.task_id,
                        "mean_reward": r.mean_reward,
                        "annualized_return": r.annualized_return,
                    })
                })
                .collect();
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Ingestion(format!("eval report: {e}")))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
