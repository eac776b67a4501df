use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Numerical(dbm_lab::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<dbm_lab::Error> for CliError {
    fn from(e: dbm_lab::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e)
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dbm-lab", version, about = "Kernels, densities and gap probabilities of Gaussian-perturbed matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration (a `.json` mirror written by a previous run also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Evolved density on a grid and the critical time at x_star.
    Density,
    /// Rescaled kernel on the window grid, against the sine kernel.
    Kernel,
    /// Sup distance to the sine kernel over every (n, t).
    Sweep,
    /// Fredholm and sampled gap probabilities.
    Gap,
    /// Eigenvalue trajectories.
    Paths,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(out) = cli.out {
        cfg.output = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    std::fs::create_dir_all(&cfg.output)?;
    std::fs::write(cfg.output.join("config.json"), cfg.canonical_json())?;
    match cli.command {
        Command::Density => commands::density(&cfg),
        Command::Kernel => commands::kernel(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Gap => commands::gap(&cfg),
        Command::Paths => commands::paths(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
