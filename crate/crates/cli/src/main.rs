use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hypoco_cli::{report, run_file, CliError, CliResult, RunOptions};

#[derive(Parser)]
#[command(
    name = "hypoco",
    version,
    about = "Convergence certificates for degenerate OU processes and particle chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a JSON scenario, writing <output>.csv and <output>.report.json.
    Run {
        scenario: PathBuf,
        /// Overrides the seed of simulate-chain and couple scenarios.
        #[arg(long)]
        seed: Option<u64>,
        /// Size of the worker pool for ensemble simulations.
        #[arg(long)]
        threads: Option<usize>,
        /// Also write <output>.gp, a gnuplot script for the CSV.
        #[arg(long)]
        gnuplot_script: bool,
    },
    /// Merge CSVs with identical headers and fit log-log slopes against column `n`.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Write <prefix>.csv and <prefix>.report.json instead of printing the table.
        #[arg(long, short)]
        output: Option<String>,
    },
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            threads,
            gnuplot_script,
        } => {
            let out = run_file(
                &scenario,
                &RunOptions {
                    seed,
                    threads,
                    gnuplot_script,
                },
            )?;
            eprintln!("wrote {}", out.csv.display());
            eprintln!("wrote {}", out.report.display());
            if let Some(gp) = out.gnuplot {
                eprintln!("wrote {}", gp.display());
            }
        }
        Command::Report { csv, output } => {
            let merged = report::merge(&csv)?;
            if let Some(slopes) = merged.summary["slopes"].as_object() {
                for (col, fit) in slopes {
                    eprintln!(
                        "slope of {col} against {}: {}",
                        report::SCALING_COLUMN,
                        fit["slope"]
                    );
                }
            }
            match output {
                None => print!("{}", merged.csv),
                Some(prefix) => {
                    let io = |e: std::io::Error| CliError::Io(format!("{prefix}: {e}"));
                    fs::write(format!("{prefix}.csv"), &merged.csv).map_err(io)?;
                    let json = serde_json::to_string_pretty(&merged.summary)
                        .map_err(|e| CliError::Io(e.to_string()))?;
                    fs::write(format!("{prefix}.report.json"), json + "\n").map_err(io)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hypoco: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
