//! `dpkalman`: calibrate, bound, solve and simulate differentially private
//! steady-state Kalman filters from a JSON config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpkalman::CalibrationKind;

mod commands;
mod format;

#[derive(Debug, Parser)]
#[command(name = "dpkalman", version, about = "Differentially private steady-state Kalman filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Print a single JSON document on stdout instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// ε interval that keeps the MSE inside [B_l, B_u].
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Overrides `calibration.kind`.
        #[arg(long, value_parser = parse_kind)]
        kind: Option<CalibrationKind>,
    },
    /// Trace and log-determinant bounds on Σ and Σ̄.
    Bounds {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo run of the private filter.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Per-(trial, k) CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary JSON output.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides `simulation.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Steady-state Riccati solution.
    Dare {
        #[command(flatten)]
        common: Common,
    },
    /// Block-diagonal composition of the `agents` list.
    Compose {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_kind(s: &str) -> Result<CalibrationKind, String> {
    s.parse().map_err(|e: dpkalman::Error| e.to_string())
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which here means "infeasible".
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (common, result) = match cli.command {
        Command::Calibrate { common, kind } => {
            let r = commands::calibrate(&common.config, kind);
            (common, r)
        }
        Command::Bounds { common } => {
            let r = commands::bounds(&common.config);
            (common, r)
        }
        Command::Simulate {
            common,
            out,
            summary,
            threads,
            seed,
        } => {
            let opts = commands::SimulateOptions {
                out,
                summary,
                threads,
                seed,
            };
            let r = commands::simulate(&common.config, &opts);
            (common, r)
        }
        Command::Dare { common } => {
            let r = commands::dare(&common.config);
            (common, r)
        }
        Command::Compose { common } => {
            let r = commands::compose(&common.config);
            (common, r)
        }
    };

    match result {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if common.json {
                println!("{}", serde_json::to_string_pretty(&report.json).expect("report serializes"));
            } else {
                print!("{}", report.human);
            }
            ExitCode::from(report.status)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_status(&e))
        }
    }
}
