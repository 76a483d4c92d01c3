//! Model loading and argument resolution shared by the commands.

use std::str::FromStr;

use anyhow::{bail, Context, Result};
use rxai_core::{
    load_model, make_reference_model, split_model, MaskKernel, Method, Model, PreprocessConfig,
    SplitModel,
};

use crate::ModelArgs;

pub fn load(args: &ModelArgs) -> Result<Model> {
    match args.model.strip_prefix("preset:") {
        Some(name) => Ok(make_reference_model(args.seed, name)?),
        None => load_model(&args.model).with_context(|| format!("loading model {}", args.model)),
    }
}

pub fn split(model: &Model, index: Option<usize>) -> Result<SplitModel> {
    let index = match index {
        Some(i) => i,
        None => model
            .default_split()
            .context("model has no spatial feature map to split at")?,
    };
    Ok(split_model(model, index)?)
}

/// Preprocessing for a square `3 x S x S` model input.
pub fn preprocess_for(model: &Model) -> Result<PreprocessConfig> {
    match model.input_shape[..] {
        [3, h, w] if h == w => Ok(PreprocessConfig::for_crop(h as u32)),
        ref other => bail!("image input needs a square 3-channel model input, got {other:?}"),
    }
}

/// Parses a comma-separated method list, rejecting duplicates.
pub fn methods(list: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m = Method::from_str(name)?;
        if out.contains(&m) {
            bail!("method `{name}` listed twice");
        }
        out.push(m);
    }
    if out.is_empty() {
        bail!("no methods given");
    }
    Ok(out)
}

/// A kernel is only meaningful for recipro.
pub fn kernel(kernel: Option<&str>, methods: &[Method]) -> Result<MaskKernel> {
    match kernel {
        None => Ok(MaskKernel::Dirac),
        Some(_) if !methods.contains(&Method::Recipro) => {
            bail!("--kernel only applies to the recipro method")
        }
        Some(k) => Ok(MaskKernel::from_str(k)?),
    }
}
