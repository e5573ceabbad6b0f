//! `recruit`: simulate trials, fit recruitment models to interim data,
//! forecast the recruitment time and run Monte Carlo studies.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use recruit_core::{ForecastMethod, ModelTag};

use commands::LoadedConfig;
use exit::CliError;

#[derive(Parser)]
#[command(name = "recruit", version, about = "Poisson-gamma recruitment forecasting with patient dropout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one trial and write its patient table.
    Simulate {
        /// TOML run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to a patient table as of an interim time.
    Estimate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Patient CSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_model)]
        model: ModelTag,
        #[arg(long)]
        t1: f64,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast the time to reach the recruitment target.
    Predict {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fitted model JSON written by `estimate`.
        #[arg(long)]
        fitted: PathBuf,
        /// Patient CSV the model was fitted on.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: Option<u64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, value_parser = parse_method)]
        method: Option<ForecastMethod>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo study plan.
    Study {
        /// Plan file; `part1` and `part2` name the bundled plans.
        #[arg(long, alias = "plan")]
        config: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the plan's replication count, e.g. 5000 for a full run.
        #[arg(long)]
        replications: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_model(s: &str) -> Result<ModelTag, String> {
    s.parse().map_err(|e: recruit_core::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<ForecastMethod, String> {
    s.parse().map_err(|e: recruit_core::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let cfg = LoadedConfig::load(config.as_deref())?;
            commands::simulate(&cfg, &commands::SimulateArgs { seed, out })
        }
        Command::Estimate {
            config,
            data,
            model,
            t1,
            out,
        } => {
            let cfg = LoadedConfig::load(config.as_deref())?;
            commands::estimate(&cfg, &commands::EstimateArgs { data, model, t1, out }).map(|_| ())
        }
        Command::Predict {
            config,
            fitted,
            data,
            target,
            horizon,
            method,
            paths,
            delta,
            seed,
            out,
        } => {
            let cfg = LoadedConfig::load(config.as_deref())?;
            commands::predict(
                &cfg,
                &commands::PredictArgs {
                    fitted,
                    data,
                    target,
                    horizon,
                    method,
                    n_paths: paths,
                    delta,
                    seed,
                    out,
                },
            )
        }
        Command::Study {
            config,
            workers,
            seed,
            replications,
            out,
        } => {
            if workers == Some(0) {
                return Err(CliError::config("--workers must be at least 1"));
            }
            let cfg = LoadedConfig::load(config.as_deref())?;
            commands::study(
                &cfg,
                &commands::StudyArgs {
                    workers,
                    seed,
                    replications,
                    out,
                },
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
