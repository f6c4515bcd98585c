//! `scrcea`: fit the illness-death screening model, evaluate counterfactual
//! screening-age measures, and run simulation studies.

mod commands;
mod config;
mod error;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scrcea_core::CiMethod;

use config::{Overrides, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "scrcea", version, about = "Counterfactual screening-age analysis with an illness-death model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Bootstrap replicates; 0 disables the bootstrap.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::builder::ValueParser::new(|s: &str| s.parse::<CiMethod>()))]
    ci_method: Option<CiMethod>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    cohort: Option<PathBuf>,
}

impl Common {
    fn load(&self, fit: Option<PathBuf>) -> Result<RunConfig, CliError> {
        let o = Overrides {
            bootstrap: self.bootstrap,
            seed: self.seed,
            ci_method: self.ci_method,
            workers: self.workers,
            output_dir: self.out_dir.clone(),
            cohort: self.cohort.clone(),
            fit,
        };
        RunConfig::load(self.config.as_deref(), &o)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort from the configured generator.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Cohort file to write (default: <out-dir>/cohort.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the three transition models and write the coefficient table.
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the configured measures, strategies and horizons.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Saved fit to reuse instead of refitting.
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Differences from never-screening per 1000 individuals.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        icer: Option<PathBuf>,
    },
    /// Replicated simulation study against the generator's true values.
    Harness {
        #[command(flatten)]
        common: Common,
    },
    /// True values of the configured measures under the generator.
    Truth {
        #[command(flatten)]
        common: Common,
    },
    /// Event rates of the high-incidence setting under each sojourn convention.
    Conventions {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200_000)]
        n: usize,
    },
    /// Tune the low-incidence setting's Weibull hazards to its targets.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200_000)]
        n: usize,
    },
}

fn run(cmd: Command) -> Result<Vec<PathBuf>, CliError> {
    match cmd {
        Command::Simulate { common, out } => commands::simulate(&common.load(None)?, out),
        Command::Fit { common } => commands::fit(&common.load(None)?),
        Command::Estimate { common, fit } => commands::estimate(&common.load(fit)?),
        Command::Report { common, estimates, icer } => commands::report(&common.load(None)?, &estimates, icer.as_deref()),
        Command::Harness { common } => commands::harness(&common.load(None)?),
        Command::Truth { common } => commands::truth_values(&common.load(None)?),
        Command::Conventions { common, n } => commands::conventions(&common.load(None)?, n),
        Command::Calibrate { common, n } => commands::calibrate(&common.load(None)?, n),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
