//! Experiment runner: reads a `key=value` configuration, applies
//! `--key=value` overrides and dispatches to one of the subcommands.
//!
//! Exit codes: 0 success, 1 configuration error, 2 divergence, 3 tuner
//! failure, 4 any other runtime failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{cmd_run, cmd_spectrum, cmd_sweep, cmd_tune, CliError};
use config::RawConfig;

/// Caps the number of worker threads.
pub const WORKERS_ENV: &str = "HVRBF_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "hvrbf",
    version,
    about = "Hyperviscosity-stabilised RBF-FD experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write metrics, snapshots and tuning traces.
    Run(Args),
    /// Find the smallest stabilising hyperviscosity constant.
    Tune(Args),
    /// Dump operator spectra for a list of constants and PHS orders.
    Spectrum(Args),
    /// Run the Cartesian product of the sweep axes.
    Sweep(Args),
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Configuration file with one `key=value` per line.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, default_value = "hvrbf-out")]
    pub out: PathBuf,
    /// `--key=value` overrides applied after the file; everything after
    /// the first override is read as an override.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub overrides: Vec<String>,
}

pub fn load(args: &Args) -> Result<RawConfig, CliError> {
    let mut raw = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            RawConfig::parse(&text, &p.display().to_string())?
        }
        None => RawConfig::default(),
    };
    for f in &args.overrides {
        raw.apply_flag(f)?;
    }
    Ok(raw)
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Run(a) => {
            let exp = load(a)?.resolve()?;
            cmd_run(&exp, &a.out).map(|_| ())
        }
        Command::Tune(a) => {
            let exp = load(a)?.resolve()?;
            cmd_tune(&exp, &a.out).map(|_| ())
        }
        Command::Spectrum(a) => {
            let exp = load(a)?.resolve()?;
            cmd_spectrum(&exp, &a.out).map(|_| ())
        }
        Command::Sweep(a) => cmd_sweep(&load(a)?, &a.out).map(|_| ()),
    }
}

fn configure_workers() {
    let Some(n) = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    else {
        return;
    };
    #[cfg(feature = "parallel")]
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
    {
        log::warn!("could not size the worker pool: {e}");
    }
    #[cfg(not(feature = "parallel"))]
    log::debug!("{WORKERS_ENV}={n} ignored in a sequential build");
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_workers();
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("hvrbf: {e}");
            e.exit_code()
        }
    }
}
