//! Command-line driver for pulse-level qutrit experiments on a virtual
//! transmon: pulse synthesis, transfer-function calibration, tomography and
//! repeatability studies. Every command is deterministic given `--seed`.

mod commands;
mod config;
mod output;

use clap::Parser;

use config::{Context, Failure, GlobalArgs};

#[derive(Parser)]
#[command(
    name = "quditc",
    version,
    about = "Pulse-level qutrit gate experiments on a simulated transmon",
    propagate_version = true
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Synthesize control pulses for target gates
    Compile(commands::compile::Args),
    /// Fit drive-line transfer parameters from device measurements
    Calibrate(commands::calibrate::Args),
    /// Compile, calibrate and tomograph a batch of random gates
    Benchmark(commands::benchmark::Args),
    /// Gate fidelity under run-to-run parameter drift
    Stability(commands::stability::Args),
    /// Time-resolved level populations during a pulse
    Trajectory(commands::trajectory::Args),
    /// Process tomography of a single gate
    Tomography(commands::tomography::Args),
}

fn main() {
    let cli = Cli::parse();
    let ctx = match Context::resolve(&cli.global) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    };

    let result = match &cli.command {
        Command::Compile(args) => commands::compile::run(&ctx, args),
        Command::Calibrate(args) => commands::calibrate::run(&ctx, args),
        Command::Benchmark(args) => commands::benchmark::run(&ctx, args),
        Command::Stability(args) => commands::stability::run(&ctx, args),
        Command::Trajectory(args) => commands::trajectory::run(&ctx, args),
        Command::Tomography(args) => commands::tomography::run(&ctx, args),
    };

    match result {
        Ok(()) => {}
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
