use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use qevents_cli::scenario::{run_simulate, SimulateArgs};
use qevents_cli::{run_cells, run_chsh, run_epr, run_thermal, CellsArgs, ChshArgs, CliError, Common, EprArgs, Output, ThermalArgs};

/// Event-pattern scenarios, Bell correlations, thermal ensemble ambiguity
/// and quasilocal cell sweeps.
///
/// Exit codes: 0 success, 2 usage or parse error, 3 scenario invariant
/// violated.
#[derive(Debug, Parser)]
#[command(name = "qevents", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Singlet joint outcome probabilities with Monte Carlo frequencies.
    Epr(EprArgs),
    /// Quantum CHSH value against the best per-link hidden-state strategy.
    Chsh(ChshArgs),
    /// Evaluate and sample the alternative sets of a scenario file.
    Simulate(SimulateArgs),
    /// Thermal momentum density against a mixture of Gaussian packets.
    ThermalAmbiguity(ThermalArgs),
    /// Momentum-balance spread against cell width.
    Cells(CellsArgs),
}

fn run(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Epr(a) => run_epr(&cli.common, a),
        Command::Chsh(a) => run_chsh(&cli.common, a),
        Command::Simulate(a) => run_simulate(&cli.common, a),
        Command::ThermalAmbiguity(a) => run_thermal(&cli.common, a),
        Command::Cells(a) => run_cells(&cli.common, a),
    }
}

fn write(path: Option<&std::path::Path>, text: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Usage(format!("cannot write output: {e}"));
    match path {
        Some(p) => std::fs::write(p, text).map_err(io),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(io),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = run(&cli).and_then(|mut out| {
        if !cli.common.no_timing {
            out.set_duration(start.elapsed().as_secs_f64());
        }
        for (path, text) in &out.side_files {
            write(Some(path), text)?;
        }
        write(cli.common.out.as_deref(), &out.render(cli.common.format))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qevents: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
