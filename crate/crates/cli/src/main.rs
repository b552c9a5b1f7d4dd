//! `ddsim`: run decoupling simulations, tomography, sweeps, critical-point
//! searches and decay fits from JSON configs.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 failure while
//! running.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Common;

#[derive(Debug)]
pub enum CliError {
    Config(Vec<String>),
    Run(String),
}

impl CliError {
    pub fn config(msg: String) -> Self {
        CliError::Config(vec![msg])
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Run(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ddsim", version, about = "Bloch-equation simulator for dynamical decoupling on spin ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Override the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Check the inputs and exit without running.
    #[arg(long, global = true)]
    validate_only: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a pulse program; writes trajectory.csv and result.json.
    Simulate {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Process tomography; writes tomography_n<N>.{json,csv} and tomography_summary.csv.
    Tomography {
        #[arg(long, short)]
        config: PathBuf,
        /// Comma-separated cycle counts, overriding the config.
        #[arg(long)]
        n_list: Option<String>,
    },
    /// Bang-Bang T2 versus cycle time; writes sweep.csv and sweep.json.
    Sweep {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Field-gradient zero search; writes critical_point.json.
    CriticalPoint {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Fit a decay curve CSV (time_s,amplitude[,sigma]); writes fit.json.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// single_exp, stretched or inv_recovery.
        #[arg(long, default_value = "single_exp")]
        model: String,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long, short)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Run(format!("thread pool: {e}")))?;
    }
    let common = Common {
        out_dir: cli.out_dir,
        seed: cli.seed,
        validate_only: cli.validate_only,
    };
    match &cli.command {
        Command::Simulate { config } => commands::cmd_simulate(config, &common),
        Command::Tomography { config, n_list } => commands::cmd_tomography(config, n_list.as_deref(), &common),
        Command::Sweep { config } => commands::cmd_sweep(config, &common),
        Command::CriticalPoint { config } => commands::cmd_critical_point(config, &common),
        Command::Fit { data, model } => commands::cmd_fit(data, model, &common),
        Command::Validate { config } => commands::cmd_validate(config, &common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Config(list) => {
                    eprintln!("error: invalid configuration ({} problem{})", list.len(), if list.len() == 1 { "" } else { "s" });
                    for m in list {
                        eprintln!("  - {m}");
                    }
                }
                CliError::Run(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(e.code())
        }
    }
}
