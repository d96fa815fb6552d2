//! `aggrex`: estimate, synthesize, solve, and partition Markov chains via soft
//! state aggregation.

mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use aggrex_core::experiments::PartitionMethod;

use crate::commands::{DiagnoseArgs, PartitionInput, SynthArgs};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::run::Run;

const THREADS_ENV: &str = "AGGREX_THREADS";

#[derive(Debug, Parser)]
#[command(name = "aggrex", version, about = "Soft state aggregation of Markov chains")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker thread cap; falls back to AGGREX_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Aggregation,
    SvdBaseline,
}

impl From<Method> for PartitionMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Aggregation => PartitionMethod::Aggregation,
            Method::SvdBaseline => PartitionMethod::SvdBaseline,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Empirical transition matrix and state frequencies of a trajectory.
    Estimate {
        /// One state index per line.
        #[arg(long)]
        trajectory: PathBuf,
        /// State count; defaults to the largest index plus one.
        #[arg(long)]
        states: Option<usize>,
    },
    /// Random ground-truth chain and an optional simulated trajectory.
    Synth {
        /// Number of states.
        #[arg(long)]
        d: Option<usize>,
        /// Number of meta-states.
        #[arg(long)]
        r: Option<usize>,
        /// Trajectory length in transitions; 0 skips simulation.
        #[arg(long, default_value_t = 0)]
        n: usize,
        /// Comma-separated block sizes of a planted hard partition.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["d", "r"])]
        blocks: Option<Vec<usize>>,
    },
    /// Rank-adaptive fit at the configured λ.
    Solve {
        /// Transition matrix CSV, one row per line.
        #[arg(long)]
        p: PathBuf,
        /// State weights, one value per line.
        #[arg(long)]
        xi: PathBuf,
        /// Ground-truth transition matrix for recovery errors.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Warm-restart path over a descending λ grid.
    Path {
        /// Transition matrix CSV, one row per line.
        #[arg(long)]
        p: PathBuf,
        /// State weights, one value per line.
        #[arg(long)]
        xi: PathBuf,
        /// Ground-truth transition matrix for recovery errors.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Explicit comma-separated grid; overrides the configured geometric grid.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Cluster states from trip records or a chain.
    Partition {
        /// Trip records `pickup_lon,pickup_lat,dropoff_lon,dropoff_lat`.
        #[arg(long, conflicts_with_all = ["p", "xi", "coords"])]
        trips: Option<PathBuf>,
        /// Transition matrix CSV, one row per line.
        #[arg(long, requires = "xi")]
        p: Option<PathBuf>,
        /// State weights, one value per line.
        #[arg(long, requires = "p")]
        xi: Option<PathBuf>,
        /// Per-state `x,y` rows written alongside the labels.
        #[arg(long)]
        coords: Option<PathBuf>,
        /// Number of clusters.
        #[arg(long)]
        k: usize,
        /// Embedding to cluster.
        #[arg(long, value_enum, default_value = "aggregation")]
        method: Method,
    },
    /// Optimality and recovery metrics of a given factor pair.
    Diagnose {
        /// Transition matrix CSV, one row per line.
        #[arg(long)]
        p: PathBuf,
        /// State weights, one value per line.
        #[arg(long)]
        xi: PathBuf,
        /// Aggregation factor, d × s.
        #[arg(long)]
        u: PathBuf,
        /// Disaggregation factor, d × s.
        #[arg(long)]
        v: PathBuf,
        /// Ground-truth transition matrix for recovery errors.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Rank at which to report singular values of the weighted data.
        #[arg(long)]
        rank: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Estimate { .. } => "estimate",
            Command::Synth { .. } => "synth",
            Command::Solve { .. } => "solve",
            Command::Path { .. } => "path",
            Command::Partition { .. } => "partition",
            Command::Diagnose { .. } => "diagnose",
        }
    }
}

fn thread_cap(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                CliError::Input(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))
            })?),
            Err(_) => None,
        },
    };
    match n {
        Some(0) => Err(CliError::Input("thread count must be at least 1".into())),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Input(e.to_string()))?;
            Ok(Some(n))
        }
        None => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let threads = thread_cap(cli.threads)?;
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    let mut run = Run::new(cli.command.name(), config, cli.config.clone(), cli.seed, threads, cli.out.clone())?;
    let result = match &cli.command {
        Command::Estimate { trajectory, states } => commands::estimate(&mut run, trajectory, *states),
        Command::Synth { d, r, n, blocks } => commands::synth(
            &mut run,
            &SynthArgs {
                d: *d,
                r: *r,
                n: *n,
                blocks: blocks.clone(),
            },
        ),
        Command::Solve { p, xi, truth } => commands::solve(&mut run, p, xi, truth.as_deref()),
        Command::Path { p, xi, truth, grid } => commands::path(&mut run, p, xi, truth.as_deref(), grid.clone()),
        Command::Partition {
            trips,
            p,
            xi,
            coords,
            k,
            method,
        } => {
            let input = match (trips, p, xi) {
                (Some(t), _, _) => PartitionInput::Trips(t),
                (None, Some(p), Some(xi)) => PartitionInput::Chain {
                    p,
                    xi,
                    coords: coords.as_deref(),
                },
                _ => return Err(CliError::Input("partition needs --trips or both --p and --xi".into())),
            };
            commands::partition(&mut run, input, *k, (*method).into())
        }
        Command::Diagnose { p, xi, u, v, truth, rank } => commands::diagnose_cmd(
            &mut run,
            &DiagnoseArgs {
                p,
                xi,
                u,
                v,
                truth: truth.as_deref(),
                rank: *rank,
            },
        ),
    };
    // The manifest is written even when the command fails part way.
    let finished = run.finish();
    result.and(finished)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aggrex: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
