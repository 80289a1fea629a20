//! `ulamchain` batch pipeline: build matrices from drifter tracks, then run
//! spectral, Bayesian, path and evolution analyses on them.

mod build;
mod config;
mod error;
mod inverse;
mod output;
mod spectral;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ulamchain", version, about = "Transfer-operator Markov chains from drifter data")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    lag_days: Option<f64>,
    /// Day zero of the forward schedule, `YYYY-MM-DD`.
    #[arg(long, global = true)]
    crash_date: Option<String>,
    #[arg(long, global = true)]
    cpi_level: Option<f64>,
    #[arg(long, global = true)]
    basin_threshold: Option<f64>,
    /// Half-width of the likelihood time window, in steps.
    #[arg(long, global = true)]
    window_steps: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Seasonal, pooled and annual matrices plus their absorbing chains.
    Build,
    /// Eigenvectors, basin of attraction and retention time.
    Spectral {
        /// Matrix label (`annual`, `pooled`, `W`, `S`, `SF`) or a matrix file.
        #[arg(long, default_value = "annual")]
        matrix: String,
        /// Number of eigenpairs.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Posterior over candidate sources from beaching times.
    Bayes {
        /// `seasonal` or `pooled`.
        #[arg(long)]
        schedule: Option<String>,
    },
    /// Most probable fixed-length paths into each target.
    Paths {
        #[arg(long)]
        schedule: Option<String>,
        /// Path length for every target; defaults to the observed times.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Forward evolution of an initial distribution.
    Evolve {
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long)]
        steps: usize,
        /// CSV `lon_index,lat_index,weight`; uniform over sources when absent.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Synthetic drifters from known kernels.
    Synth {
        /// Synthetic experiment (TOML); `--config` is used when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(anyhow::anyhow!("thread pool: {e}")))?;
    }
    if let Command::Synth { spec } = &cli.command {
        let spec = spec
            .clone()
            .or(g.config.clone())
            .ok_or_else(|| CliError::input(anyhow::anyhow!("synth needs --spec or --config")))?;
        let out = g.out.clone().unwrap_or_else(|| PathBuf::from("synth_out"));
        return synth::run(&spec, &out, g.seed);
    }

    let path = g
        .config
        .clone()
        .ok_or_else(|| CliError::input(anyhow::anyhow!("--config is required")))?;
    let overrides = Overrides {
        out: g.out,
        lag_days: g.lag_days,
        crash_date: g.crash_date,
        cpi_level: g.cpi_level,
        basin_threshold: g.basin_threshold,
        window_steps: g.window_steps,
        seed: g.seed,
    };
    let cfg = RunConfig::load(&path, overrides)?;
    match cli.command {
        Command::Build => build::run(&cfg),
        Command::Spectral { matrix, k } => spectral::run(&cfg, &matrix, k),
        Command::Bayes { schedule } => inverse::bayes(&cfg, schedule.as_deref()),
        Command::Paths { schedule, steps } => inverse::paths(&cfg, schedule.as_deref(), steps),
        Command::Evolve { schedule, steps, init } => {
            inverse::evolve(&cfg, schedule.as_deref(), steps, init.as_deref())
        }
        Command::Synth { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
