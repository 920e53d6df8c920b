//! Command-line front end. All commands are deterministic functions of the
//! configuration file and the seed; parallelism is capped by the
//! `COMMUNITY_FORGE_THREADS` environment variable.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::SweepParameter;
use crate::config::RunConfig;

/// Exit codes: 0 success/pass, 1 verification failure, 2 infeasible model,
/// 64 usage error, 66 missing input, 70 internal defect.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError {
            code: 64,
            message: msg.into(),
        }
    }

    fn missing_input(msg: impl Into<String>) -> Self {
        CliError {
            code: 66,
            message: msg.into(),
        }
    }

    fn infeasible(msg: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: msg.into(),
        }
    }

    fn verification_failed() -> Self {
        CliError {
            code: 1,
            message: "equilibrium verification failed".into(),
        }
    }

    fn internal(msg: impl Into<String>) -> Self {
        CliError {
            code: 70,
            message: msg.into(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "community-forge",
    about = "Construct, verify and analyze content-community structures on a ring of topics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for deterministic agent sampling (overrides the configuration).
    #[arg(long)]
    seed: Option<u64>,
    /// Ring grid size (overrides the configuration).
    #[arg(long)]
    grid: Option<usize>,
    /// Deviation-gain tolerance (overrides the configuration).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the covering community structure for the configured parameters.
    Construct {
        #[command(flatten)]
        common: Common,
        /// Prescribe the community count instead of deriving it.
        #[arg(long)]
        communities: Option<usize>,
    },
    /// Check a stored structure for profitable unilateral deviations.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Path to a structure.json produced by `construct`.
        #[arg(long)]
        structure: PathBuf,
        /// Number of sampled agents.
        #[arg(long, default_value_t = 200)]
        agents: usize,
    },
    /// Sweep one model parameter and tabulate structure statistics.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of: c, E_p, E_q, f.width, g.width
        #[arg(long)]
        parameter: String,
        #[arg(long)]
        start: f64,
        #[arg(long)]
        end: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
    /// Filtering analysis of a stored structure: optimal filter agent,
    /// threshold filter, expert routing plan.
    FilterAnalysis {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        structure: PathBuf,
        /// Width of the kernel filter used in the agent scan.
        #[arg(long, default_value_t = 0.2)]
        h_width: f64,
    },
    /// Dump demand, supply, production and utility grids for one community.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Community index within the constructed structure.
        #[arg(long, default_value_t = 0)]
        community: usize,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(grid) = common.grid {
        config.numerics.ring_grid_n = grid;
        config
            .numerics
            .validate()
            .map_err(|e| CliError::usage(format!("invalid grid override: {e}")))?;
    }
    Ok(config)
}

fn run() -> Result<(), CliError> {
    if let Ok(threads) = std::env::var("COMMUNITY_FORGE_THREADS") {
        let n: usize = threads
            .parse()
            .map_err(|_| CliError::usage("COMMUNITY_FORGE_THREADS must be an integer"))?;
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
        }
    }

    let cli = Cli::parse();
    match cli.command {
        Command::Construct {
            common,
            communities,
        } => {
            let config = load(&common)?;
            commands::cmd_construct(&config, common.out.as_deref(), communities)
        }
        Command::Verify {
            common,
            structure,
            agents,
        } => {
            let config = load(&common)?;
            commands::cmd_verify(
                &config,
                &structure,
                common.out.as_deref(),
                agents,
                common.tol,
            )
        }
        Command::Sweep {
            common,
            parameter,
            start,
            end,
            steps,
        } => {
            let config = load(&common)?;
            let parameter = SweepParameter::parse(&parameter)?;
            commands::cmd_sweep(&config, parameter, start, end, steps, common.out.as_deref())
        }
        Command::FilterAnalysis {
            common,
            structure,
            h_width,
        } => {
            let config = load(&common)?;
            commands::cmd_filter_analysis(&config, &structure, common.out.as_deref(), h_width)
        }
        Command::Profile { common, community } => {
            let config = load(&common)?;
            commands::cmd_profile(&config, common.out.as_deref(), community)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(e.code)
        }
    }
}
