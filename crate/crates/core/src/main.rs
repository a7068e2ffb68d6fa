use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rmns::commands::{
    cmd_correlate, cmd_herald, cmd_simulate, cmd_steer, CorrelateArgs, HeraldArgs, SimulateArgs,
    SteerArgs,
};

/// Multimode Raman memory simulator: frames, correlation maps, steering, heralding.
#[derive(Parser)]
#[command(name = "rmns", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a frame stack.
    Simulate(SimulateArgs),
    /// Correlation maps, spot fits and cross-sections from a stack.
    Correlate(CorrelateArgs),
    /// Compensated readout for each fiber, with verification report.
    Steer(SteerArgs),
    /// Heralded multiplexed-source statistics.
    Herald(HeraldArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &mut out),
        Command::Correlate(a) => cmd_correlate(a, &mut out),
        Command::Steer(a) => cmd_steer(a, &mut out),
        Command::Herald(a) => cmd_herald(a, &mut out),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("rmns: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
