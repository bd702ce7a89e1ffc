//! `hdp-slice`: generate synthetic grouped data, fit an HDP mixture with the
//! exact slice sampler, and score label files.

mod commands;
mod error;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{resolve, EvalSettings, FitSettings, GenerateSettings};

#[derive(Parser)]
#[command(name = "hdp-slice", version, about = "Exact slice sampler for HDP mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset and its labels from the HDP prior
    Generate(GenerateSettings),
    /// Run the sampler on a dataset
    Fit(FitSettings),
    /// Compare estimated labels with reference labels
    Eval(EvalSettings),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(s) => {
            let config = s.config.clone();
            resolve(s, config.as_deref()).and_then(commands::generate)
        }
        Command::Fit(s) => {
            let config = s.config.clone();
            resolve(s, config.as_deref()).and_then(commands::fit)
        }
        Command::Eval(s) => {
            let config = s.config.clone();
            resolve(s, config.as_deref()).and_then(commands::eval)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
