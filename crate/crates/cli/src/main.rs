//! `pnmm`: phantom generation, unmixing, evaluation and slice export.

mod bundle;
mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{eval, experiment, phantom, slices, unmix};

#[derive(Parser, Debug)]
#[command(
    name = "pnmm",
    version,
    about = "Nonlinear unmixing of dynamic PET images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic phantom with ground truth
    Phantom(phantom::Args),
    /// Unmix a dynamic image (PNMM) or fit voxelwise kinetics (DEPICT)
    Unmix(unmix::Args),
    /// Score estimates against a ground-truth bundle
    Eval(eval::Args),
    /// Export one plane of a volume as a PPM image
    Slices(slices::Args),
    /// Multi-realization NMSE experiment on a phantom
    Experiment(experiment::Args),
}

/// Exit status for a failed command: 1 for bad input, 2 for runtime failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|cause| {
        cause
            .downcast_ref::<pnmm_core::Error>()
            .is_some_and(pnmm_core::Error::is_usage)
            || cause.downcast_ref::<commands::UsageError>().is_some()
    });
    if usage {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PNMM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    let result = match cli.command {
        Command::Phantom(a) => phantom::run(a, &args),
        Command::Unmix(a) => unmix::run(a, &args),
        Command::Eval(a) => eval::run(a, &args),
        Command::Slices(a) => slices::run(a),
        Command::Experiment(a) => experiment::run(a, &args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
