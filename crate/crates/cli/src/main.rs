//! `roughcadlag` command-line front end.
//!
//! Exit codes: 0 success, 1 domain or input error, 2 verification failure,
//! 64 usage error. Failures print one line to standard error of the form
//! `roughcadlag: <kind>: <reason>`.

mod commands;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{LiftArgs, PvarArgs, RateArgs, ReparamArgs, SimulateArgs, VerifyArgs};
use crate::report::ReportArgs;

const EXIT_DOMAIN: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Environment variable capping the worker thread count.
const THREADS_VAR: &str = "ROUGHCADLAG_THREADS";

#[derive(Parser, Debug)]
#[command(name = "roughcadlag", version, about = "Dyadic Itô lifts of càdlàg staircase paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded staircase path as CSV.
    Simulate(SimulateArgs),
    /// Build a rough lift from a path CSV.
    Lift(LiftArgs),
    /// Exact p-variation of a path CSV.
    Pvar(PvarArgs),
    /// Fit the convergence rate of the dyadic integrals.
    Rate(RateArgs),
    /// Check structural identities of a lift JSON.
    Verify(VerifyArgs),
    /// Variation clock and Hölder reparametrization of a path CSV.
    Reparam(ReparamArgs),
    /// Summarise lift and rate artifacts as a CSV table.
    Report(ReportArgs),
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Lib(roughcadlag::Error),
    /// An input artifact did not match its schema.
    Schema(String),
    Verify(String),
}

impl From<roughcadlag::Error> for Failure {
    fn from(e: roughcadlag::Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Lib(roughcadlag::Error::Consistency(_)) | Failure::Verify(_) => EXIT_VERIFY,
            Failure::Lib(_) | Failure::Schema(_) => EXIT_DOMAIN,
        }
    }

    fn line(&self) -> String {
        let (kind, reason) = match self {
            Failure::Usage(r) => ("usage", r.clone()),
            Failure::Lib(e) => (e.kind(), e.to_string()),
            Failure::Schema(r) => ("schema", r.clone()),
            Failure::Verify(r) => ("verify", r.clone()),
        };
        let reason = reason.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("roughcadlag: {kind}: {reason}")
    }
}

pub type CmdResult = Result<(), Failure>;

fn configure_threads() -> CmdResult {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot configure thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Lift(a) => commands::lift(a),
        Command::Pvar(a) => commands::pvar(a),
        Command::Rate(a) => commands::rate(a),
        Command::Verify(a) => commands::verify(a),
        Command::Reparam(a) => commands::reparam(a),
        Command::Report(a) => report::report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("{}", Failure::Usage(first).line());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code())
        }
    }
}
