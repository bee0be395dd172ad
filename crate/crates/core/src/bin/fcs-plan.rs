use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fcs_planner::cli::{self, Mode, Overrides};

#[derive(Parser)]
#[command(
    name = "fcs-plan",
    version,
    about = "Fast-charging station location planning"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the planning pipeline described by a JSON config.
    Run {
        /// Run config (JSON).
        config: PathBuf,
        /// Replaces the config's seed for both fleet and CE sampling.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Output directory (default: the config's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// CE scoring threads (default: logical cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Write one JSON line per objective evaluation.
        #[arg(long)]
        trace_objective: bool,
    },
    /// Score and rank candidate placements, one binary vector per line.
    Compare {
        /// Run config (JSON).
        config: PathBuf,
        /// Text file with one 0/1 vector over the candidate list per line.
        placements: PathBuf,
        /// Replaces the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Writes to stdout, ignoring a closed pipe (e.g. `| head`).
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match args.command {
        Command::Run {
            config,
            seed,
            mode,
            out,
            workers,
            trace_objective,
        } => {
            let overrides = Overrides {
                seed,
                mode,
                out,
                workers,
                trace_objective,
            };
            match cli::cmd_run(&config, &overrides) {
                Ok(report) => {
                    let r = &report.result;
                    let mut summary = format!(
                        "S = {:.6}  stations = {:?}  captured = {}/{}  tco = {:.6}  penalty = {}\n",
                        r.score, r.stations, r.captured_volume, r.total_flow, r.tco.tco, r.penalty
                    );
                    if let Some(iterations) = r.iterations {
                        let state = if r.converged {
                            "converged"
                        } else {
                            "did not converge"
                        };
                        summary += &format!("CE {state} after {iterations} iterations\n");
                    }
                    summary += &format!("artifacts written to {}\n", report.output_dir.display());
                    emit(&summary);
                    report.exit_code
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::Compare {
            config,
            placements,
            seed,
        } => {
            let overrides = Overrides {
                seed,
                ..Default::default()
            };
            match cli::cmd_compare(&config, &placements, &overrides) {
                Ok(rows) => {
                    emit(&cli::render_compare(&rows));
                    cli::EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
