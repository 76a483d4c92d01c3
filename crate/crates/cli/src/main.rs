//! `rxai`: saliency maps, metric reports, benchmarks and model inspection.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod bench_cmd;
mod eval;
mod explain;
mod inspect;
mod render;
mod setup;

#[derive(Parser)]
#[command(name = "rxai", version, about = "Class activation maps for small CNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command that runs a model.
#[derive(Args, Clone)]
pub struct ModelArgs {
    /// Model manifest path, or `preset:tiny8` / `preset:mid16`.
    #[arg(long)]
    pub model: String,
    /// Seed for preset weights and synthetic inputs.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Split index (layers before it form the feature network). Defaults to
    /// the deepest spatial feature map.
    #[arg(long)]
    pub split: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a saliency map for one image.
    Explain(explain::ExplainArgs),
    /// Run the metric suite over an image directory.
    Eval(eval::EvalArgs),
    /// Count passes and time methods on seeded inputs.
    Bench(bench_cmd::BenchArgs),
    /// Print the layer table, split points and parameter counts.
    Inspect(inspect::InspectArgs),
    /// Write a preset model to a manifest and weight blob.
    MakeModel {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Manifest path; the blob is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Explain(a) => explain::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Bench(a) => bench_cmd::run(&a),
        Command::Inspect(a) => inspect::run(&a),
        Command::MakeModel { preset, seed, out } => {
            let model = rxai_core::make_reference_model(seed, &preset)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            rxai_core::save_model(&model, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
