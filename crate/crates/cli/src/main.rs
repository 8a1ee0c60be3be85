mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Failure;
use crate::config::RunConfig;

/// Boundary MERA batch runs. Exit codes: 0 ok, 1 usage or other error,
/// 2 constraint failure, 3 not mixing, 4 oracle mismatch, 5 budget exceeded.
#[derive(Parser, Debug)]
#[command(name = "bmera", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Isometry and unitarity defects of the tensors.
    Check(Args),
    /// Spectra of the descending, doubled and boundary maps.
    Spectrum(Args),
    /// One-point profile near the left edge with a power-law fit.
    Profile(Args),
    /// Bulk two-point function at dyadic separations with a power-law fit.
    Correlator(Args),
    /// Boundary energy and its divergence diagnostics.
    Energy(Args),
    /// Variational optimization with checkpoints.
    Optimize(Args),
    /// Recursed density matrices against exact partial traces.
    Exact(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, args) = match cli.command {
        Command::Check(a) => ("check", a),
        Command::Spectrum(a) => ("spectrum", a),
        Command::Profile(a) => ("profile", a),
        Command::Correlator(a) => ("correlator", a),
        Command::Energy(a) => ("energy", a),
        Command::Optimize(a) => ("optimize", a),
        Command::Exact(a) => ("exact", a),
    };
    let result = RunConfig::load(&args.config)
        .map_err(Failure::Config)
        .and_then(|cfg| commands::run(name, &cfg, &args.config, &args.out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
