use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod dataset;
mod eval;
mod run;
mod synth;

#[derive(Parser)]
#[command(name = "triage", version, about = "Aerial person-status triage toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the streaming pipeline described by a config file.
    Run(run::RunArgs),
    /// Sample, split, export and score clip datasets.
    #[command(subcommand)]
    Dataset(dataset::DatasetCommand),
    /// Recall report over one or more prediction files.
    Eval(eval::EvalArgs),
    /// Render synthetic scenes into a dataset root.
    Synth(synth::SynthArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run::run(a),
        Command::Dataset(c) => dataset::run(c),
        Command::Eval(a) => eval::run(a),
        Command::Synth(a) => synth::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Writes `text` to `path`, or stdout when absent.
fn emit(path: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    use anyhow::Context;
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
