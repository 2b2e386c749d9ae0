//! `emkit`: fit, compare and diagnose mixture models from the command line.
//!
//! Settings come from a flat `key = value` file (`--config`), then from
//! `--set KEY=VALUE` pairs, then from the dedicated flags; later values win.
//! `EMKIT_SEED` replaces the default seed of 0 when no seed is configured.
//!
//! Exit status: 0 on success (converged or out of iterations), 1 on I/O
//! failure, 2 on a configuration error, 3 on a data error, 4 when the fit
//! diverged.

mod commands;
mod config;
mod data;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Command, RawConfig, Settings};
use crate::error::CliError;
use crate::output::FitDocument;

#[derive(Parser)]
#[command(name = "emkit", version, about = "EM fitting, benchmarking and diagnostics for finite mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Fit one variant and write a result document and an optional trace.
    Fit(Common),
    /// Run several variants on the same data and tabulate their convergence.
    Bench(Common),
    /// Speed matrix and information identities at a fitted fixed point.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Result document of a converged fit; its config echo is the base configuration.
        #[arg(long, value_name = "PATH")]
        result: Option<PathBuf>,
    },
    /// Grid-search maximum likelihood with zoomed refinement.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    data: Option<String>,
    /// Variant tag; for bench a comma-separated list.
    #[arg(long, value_name = "NAME")]
    variant: Option<String>,
    #[arg(long, value_name = "N")]
    seed: Option<String>,
    #[arg(long, value_name = "N")]
    max_iters: Option<String>,
    /// Sets both the parameter and the log-likelihood tolerance.
    #[arg(long, value_name = "X")]
    tol: Option<String>,
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
    #[arg(long, value_name = "PATH")]
    trace: Option<String>,
    /// Any configuration key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn apply(&self, raw: &mut RawConfig, command: Command) -> Result<(), CliError> {
        if let Some(p) = &self.config {
            raw.merge_file(p)?;
        }
        for pair in &self.set {
            raw.set_pair(pair)?;
        }
        let variant_key = if command == Command::Bench { "variants" } else { "variant" };
        let flags = [
            ("data", &self.data),
            (variant_key, &self.variant),
            ("seed", &self.seed),
            ("max_iters", &self.max_iters),
            ("tol_param", &self.tol),
            ("tol_loglik", &self.tol),
            ("out", &self.out),
            ("trace", &self.trace),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                raw.set(key, v)?;
            }
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut raw = RawConfig::default();
    let (command, common) = match &cli.command {
        Sub::Fit(c) => (Command::Fit, c),
        Sub::Bench(c) => (Command::Bench, c),
        Sub::Diagnose { common, result } => {
            if let Some(path) = result {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read result {}: {e}", path.display())))?;
                raw.merge_echo(&FitDocument::parse(&text)?.config)?;
                raw.set("result", &path.display().to_string())?;
            }
            (Command::Diagnose, common)
        }
        Sub::Oracle(c) => (Command::Oracle, c),
    };
    common.apply(&mut raw, command)?;
    let settings = Settings::from_raw(&raw, command)?;
    match command {
        Command::Fit => commands::fit(&settings),
        Command::Bench => commands::bench(&settings),
        Command::Diagnose => commands::diagnose(&settings),
        Command::Oracle => commands::oracle(&settings),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("emkit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
