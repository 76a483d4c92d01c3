//! `rxai eval`: metric reports over an image directory.
//!
//! Labels are read from a headerless CSV of `filename,class_index` lines.
//! Images without a label are skipped and counted; images that fail to load
//! or evaluate are listed as failures. Either makes the command exit nonzero
//! unless `--lenient` is set. Reports are written as `<method>_report.csv`
//! and `<method>_summary.txt`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rxai_core::metrics::EvalFailure;
use rxai_core::{
    evaluate_method, load_image, preprocess_image, EvalOptions, EvalSample, PreprocessConfig,
};

use crate::{setup, ModelArgs};

const IMAGE_EXTENSIONS: [&str; 3] = ["ppm", "png", "pnm"];

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated method names.
    #[arg(long, default_value = "recipro")]
    pub methods: String,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Exit 0 even if some images were skipped or failed.
    #[arg(long)]
    pub lenient: bool,
}

pub fn read_labels(path: &Path) -> Result<HashMap<String, usize>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading labels {}", path.display()))?;
    let mut labels = HashMap::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let (Some(name), Some(class), None) = (row.get(0), row.get(1), row.get(2)) else {
            bail!(
                "{}: row {}: expected `filename,class_index`",
                path.display(),
                line + 1
            );
        };
        let class = class.parse().with_context(|| {
            format!(
                "{}: row {}: bad class index `{class}`",
                path.display(),
                line + 1
            )
        })?;
        labels.insert(name.to_string(), class);
    }
    Ok(labels)
}

/// Image files in the directory, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image && path.is_file() {
            names.extend(
                path.file_name()
                    .and_then(|n| n.to_str())
                    .map(str::to_string),
            );
        }
    }
    names.sort();
    if names.is_empty() {
        bail!("no images found in {}", dir.display());
    }
    Ok(names)
}

struct Dataset {
    samples: Vec<EvalSample>,
    load_failures: Vec<EvalFailure>,
    skipped: usize,
}

fn load_dataset(
    dir: &Path,
    labels: &HashMap<String, usize>,
    cfg: &PreprocessConfig,
) -> Result<Dataset> {
    let mut ds = Dataset {
        samples: Vec::new(),
        load_failures: Vec::new(),
        skipped: 0,
    };
    for name in list_images(dir)? {
        let Some(&class_index) = labels.get(&name) else {
            eprintln!("skipping {name}: no label");
            ds.skipped += 1;
            continue;
        };
        match load_image(dir.join(&name)).and_then(|img| preprocess_image(&img, cfg)) {
            Ok(input) => ds.samples.push(EvalSample {
                id: name,
                input,
                class_index,
            }),
            Err(e) => ds.load_failures.push(EvalFailure {
                image: name,
                message: e.to_string(),
            }),
        }
    }
    Ok(ds)
}

fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("RXAI_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => bail!("RXAI_THREADS must be a positive integer, got `{v}`"),
        },
        Err(_) => Ok(None),
    }
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let methods = setup::methods(&args.methods)?;
    let kernel = setup::kernel(args.kernel.as_deref(), &methods)?;
    let opts = EvalOptions {
        kernel,
        threads: thread_cap()?,
    };
    let model = setup::load(&args.model)?;
    let split = setup::split(&model, args.model.split)?;
    let cfg = setup::preprocess_for(&model)?;
    let labels = read_labels(&args.labels)?;
    let ds = load_dataset(&args.data, &labels, &cfg)?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut incomplete = false;
    for method in methods {
        let mut report = if ds.samples.is_empty() {
            rxai_core::MetricReport {
                method: method.name().to_string(),
                records: Vec::new(),
                aggregate: None,
                failures: Vec::new(),
                skipped: 0,
            }
        } else {
            evaluate_method(&model, &split, &ds.samples, method, &opts)?
        };
        report.skipped = ds.skipped;
        report.failures.extend(ds.load_failures.iter().cloned());
        report.failures.sort_by(|a, b| a.image.cmp(&b.image));
        incomplete |= report.skipped > 0 || !report.failures.is_empty();

        let csv_path = args.out.join(format!("{}_report.csv", method.name()));
        std::fs::write(&csv_path, report.to_csv())
            .with_context(|| format!("writing {}", csv_path.display()))?;
        let summary = report.to_summary();
        let txt_path = args.out.join(format!("{}_summary.txt", method.name()));
        std::fs::write(&txt_path, &summary)
            .with_context(|| format!("writing {}", txt_path.display()))?;
        print!("{summary}");
    }
    if incomplete && !args.lenient {
        bail!("some images were skipped or failed (use --lenient to accept partial results)");
    }
    Ok(())
}
