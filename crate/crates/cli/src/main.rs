use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use radcool_cli::commands::{replay, run, CliError, Command};

#[derive(Parser)]
#[command(name = "radcool", version, about = "Simulate and analyze radiative cooling of a microwave resonator")]
struct Cli {
    /// Directory for output tables and the run record.
    #[arg(long, global = true, env = "RADCOOL_OUT", default_value = "radcool-out")]
    out: PathBuf,
    /// Master seed; overrides `run.seed` in the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Verb,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Subcommand)]
enum Verb {
    /// Closed-form mode and output spectra for each panel of a scenario.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Fit noise-thermometry sweeps, and the link when both planes are given.
    Calibrate {
        /// Generate and fit synthetic sweeps for this scenario.
        #[arg(long, conflicts_with = "sweep")]
        scenario: Option<PathBuf>,
        /// Measured sweep table; give one per reference plane.
        #[arg(long)]
        sweep: Vec<PathBuf>,
    },
    /// Mode occupancy from on- and off-resonance spectra in quanta.
    Extract {
        #[arg(long)]
        on: PathBuf,
        #[arg(long)]
        off: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Synthetic measurements over `source.sweep` plus the theory curve.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Check the closed forms against the stochastic time-domain model.
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Re-run a recorded command and compare its outputs byte for byte.
    Replay { record: PathBuf },
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
    let Format::Csv = cli.format;
    let result = match cli.command {
        Verb::Replay { record } => replay(&record, &cli.out),
        verb => {
            let cmd = match verb {
                Verb::Simulate { scenario } => Command::Simulate { scenario },
                Verb::Calibrate { scenario, sweep } => {
                    if scenario.is_none() && sweep.is_empty() {
                        report(&CliError::Usage("calibrate needs --scenario or --sweep".into()));
                        return ExitCode::from(1);
                    }
                    Command::Calibrate { scenario, sweeps: sweep }
                }
                Verb::Extract { on, off, scenario } => Command::Extract { on, off, scenario },
                Verb::Sweep { scenario } => Command::Sweep { scenario },
                Verb::Oracle { scenario } => Command::Oracle { scenario },
                Verb::Replay { .. } => unreachable!(),
            };
            run(&cmd, cli.seed, &cli.out)
        }
    };
    match result {
        Ok(summary) => {
            print!("{summary}");
            if !summary.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report(e: &CliError) {
    eprintln!("radcool: error: {e}");
}
