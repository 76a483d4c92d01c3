//! `rxai explain`: one image, one method, three output files.
//!
//! For an image `disc.ppm` and method `recipro` the outputs are
//! `disc_recipro.pgm` (map at its own resolution), `disc_recipro_overlay.ppm`
//! (colormapped map over the cropped input) and `disc_recipro.json`.
//! A non-default kernel is appended to the tag, e.g. `disc_recipro-gauss3`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rxai_core::preprocess::{normalize, resize_and_crop};
use rxai_core::{generate, load_image, softmax, CostTally, MaskKernel, Method, Tensor};
use serde::Serialize;

use crate::{render, setup, ModelArgs};

#[derive(Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "recipro")]
    pub method: String,
    /// Mask kernel for recipro: `dirac` or `gauss3`.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Class index to explain, or `argmax` for the predicted class.
    #[arg(long = "class", default_value = "argmax")]
    pub class: String,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    image: String,
    model: &'a str,
    method: &'static str,
    kernel: Option<&'static str>,
    split: Option<usize>,
    class_index: usize,
    class_name: Option<&'a str>,
    predicted_class: usize,
    score: f32,
    predicted_score: f32,
    degenerate: bool,
    map_shape: [usize; 2],
    cost: CostTally,
    files: [String; 2],
}

fn parse_class(s: &str) -> Result<Option<usize>> {
    if s == "argmax" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .with_context(|| format!("--class expects an index or `argmax`, got `{s}`"))
}

fn file_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .with_context(|| format!("cannot derive an output name from {}", path.display()))
}

pub fn run(args: &ExplainArgs) -> Result<()> {
    let method: Method = args.method.parse()?;
    let kernel = setup::kernel(args.kernel.as_deref(), &[method])?;
    let requested = parse_class(&args.class)?;

    let model = setup::load(&args.model)?;
    let split = setup::split(&model, args.model.split)?;
    let cfg = setup::preprocess_for(&model)?;
    let img = load_image(&args.image)?;
    let view = resize_and_crop(&img, &cfg)?;
    let input = normalize(&view, &cfg);

    let probs = softmax(&model.logits(&input)?);
    let predicted = Tensor::new(vec![probs.len()], probs.clone())?.argmax();
    let class_index = requested.unwrap_or(predicted);
    model.check_class(class_index)?;

    let mut cost = CostTally::default();
    let map = generate(
        method,
        kernel,
        &model,
        &split,
        &input,
        class_index,
        &mut cost,
    )?;

    let mut tag = format!("{}_{}", file_stem(&args.image)?, method.name());
    if kernel != MaskKernel::Dirac {
        tag = format!("{tag}-{}", kernel.name());
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let raw_name = format!("{tag}.pgm");
    let overlay_name = format!("{tag}_overlay.ppm");
    render::save_pgm(
        &render::map_to_gray(&map.values)?,
        &args.out.join(&raw_name),
    )?;
    render::save_ppm(
        &render::overlay(&view, &map.values)?,
        &args.out.join(&overlay_name),
    )?;

    let sidecar = Sidecar {
        image: args
            .image
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        model: &model.name,
        method: method.label(),
        kernel: (method == Method::Recipro).then(|| kernel.name()),
        split: map.split_index,
        class_index,
        class_name: model.class_names.as_ref().map(|n| n[class_index].as_str()),
        predicted_class: predicted,
        score: probs[class_index],
        predicted_score: probs[predicted],
        degenerate: map.degenerate,
        map_shape: [map.height(), map.width()],
        cost,
        files: [raw_name, overlay_name],
    };
    let json_path = args.out.join(format!("{tag}.json"));
    let text = serde_json::to_string_pretty(&sidecar)? + "\n";
    std::fs::write(&json_path, text).with_context(|| format!("writing {}", json_path.display()))?;
    if map.degenerate {
        eprintln!("warning: {} map is constant (degenerate)", method.label());
    }
    println!(
        "{}: class {class_index} (p={:.4}), predicted {predicted} -> {}",
        method.label(),
        probs[class_index],
        args.out.join(&tag).display()
    );
    Ok(())
}
