//! `rosevo`: single runs, ablation sweeps and log replay.
//!
//! Exit status: 0 success, 2 configuration error, 3 runtime error,
//! 4 replay mismatch.

mod ablate;
mod error;
mod report;
mod run;
mod setup;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "rosevo", version, about = "Evolve reward observation spaces with a designer in the loop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One evolution run; writes its log, table snapshots and metrics.
    Run(run::RunArgs),
    /// Sweep tasks x variants x seeds and tabulate ESR_avg and SSD.
    Ablate(ablate::AblateArgs),
    /// Replay run logs, check them and export best-success curves.
    Report(report::ReportArgs),
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("ROSEVO_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run(args) => run::run(args),
        Command::Ablate(args) => ablate::ablate(args),
        Command::Report(args) => report::report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
