//! `rxai bench`: pass counts and single-threaded timing on seeded inputs.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rxai_bench::{render_csv, render_table, time_method, DEFAULT_WARMUP};
use rxai_core::seeded_input;

use crate::{setup, ModelArgs};

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "recipro,grad,score,ablation")]
    pub methods: String,
    #[arg(long)]
    pub kernel: Option<String>,
    /// Timed invocations per method, one per seeded input.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    pub warmup: usize,
    /// Directory for `bench.txt` and `bench.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &BenchArgs) -> Result<()> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let methods = setup::methods(&args.methods)?;
    let kernel = setup::kernel(args.kernel.as_deref(), &methods)?;
    let model = setup::load(&args.model)?;
    let split = setup::split(&model, args.model.split)?;
    let inputs: Vec<_> = (0..args.n as u64)
        .map(|i| seeded_input(args.model.seed.wrapping_add(i), &model.input_shape))
        .collect();

    let mut profiles = Vec::with_capacity(methods.len());
    for method in methods {
        let p = time_method(method, kernel, &model, &split, &inputs, args.warmup)
            .with_context(|| format!("benchmarking {method}"))?;
        profiles.push(p);
    }
    let table = render_table(&profiles)?;
    print!("{table}");
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        std::fs::write(out.join("bench.txt"), &table)?;
        std::fs::write(out.join("bench.csv"), render_csv(&profiles)?)?;
    }
    Ok(())
}
