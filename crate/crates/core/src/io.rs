//! On-disk model format.
//!
//! A model is a UTF-8 JSON manifest plus a weight blob. The blob is the
//! 8-byte magic `RXAIW001` followed by little-endian `f32` values. Each
//! parameter tensor in the manifest names its `offset` and `len` in floats,
//! counted from the first value after the magic. The payload must hold
//! exactly the sum of all declared lengths.
//!
//! ```json
//! {
//!   "format": "rxai-model",
//!   "version": 1,
//!   "name": "tiny8",
//!   "input_shape": [3, 32, 32],
//!   "class_names": null,
//!   "weights": "tiny8.bin",
//!   "layers": [
//!     {"kind": "conv2d", "in_channels": 3, "out_channels": 8, "kernel": 3,
//!      "stride": 2, "padding": 1,
//!      "weight": {"offset": 0, "len": 216}, "bias": {"offset": 216, "len": 8}},
//!     {"kind": "relu"},
//!     {"kind": "maxpool2d", "kernel": 2, "stride": 2, "padding": 0},
//!     {"kind": "global_avg_pool"},
//!     {"kind": "linear", "in_features": 16, "out_features": 10,
//!      "weight": {"offset": 1392, "len": 160}, "bias": {"offset": 1552, "len": 10}}
//!   ]
//! }
//! ```
//! (excerpt; layer list abbreviated)

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Conv2d, LayerSpec, Linear, Pool};
use crate::model::Model;
use crate::tensor::Tensor;

pub const WEIGHT_MAGIC: &[u8; 8] = b"RXAIW001";
pub const MANIFEST_FORMAT: &str = "rxai-model";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRange {
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerEntry {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        weight: BlobRange,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bias: Option<BlobRange>,
    },
    Relu,
    #[serde(rename = "maxpool2d")]
    MaxPool2d {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    #[serde(rename = "avgpool2d")]
    AvgPool2d {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    GlobalAvgPool,
    Linear {
        in_features: usize,
        out_features: usize,
        weight: BlobRange,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bias: Option<BlobRange>,
    },
    Softmax,
    Flatten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub input_shape: Vec<usize>,
    pub class_names: Option<Vec<String>>,
    /// Blob path, relative to the manifest's directory.
    pub weights: String,
    pub layers: Vec<LayerEntry>,
}

/// Loads and validates a model from its manifest path.
pub fn load_model(manifest_path: impl AsRef<Path>) -> Result<Model> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported format {} v{}",
            manifest.format, manifest.version
        )));
    }
    let blob_path = blob_path(manifest_path, &manifest.weights);
    let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let payload = decode_blob(&blob_path, &bytes)?;
    model_from_parts(&manifest, &payload)
}

fn blob_path(manifest_path: &Path, weights: &str) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(weights)
}

fn decode_blob(path: &Path, bytes: &[u8]) -> Result<Vec<f32>> {
    if bytes.len() < WEIGHT_MAGIC.len() || &bytes[..8] != WEIGHT_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let payload = &bytes[8..];
    let chunks = payload.chunks_exact(4);
    let trailing = chunks.remainder().len();
    let values: Vec<f32> = chunks
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if trailing != 0 {
        // a partial float means the blob was cut mid-value
        return Err(Error::WeightCount {
            expected: values.len() + 1,
            actual: values.len(),
        });
    }
    Ok(values)
}

/// Assembles a model from a parsed manifest and the blob payload.
pub fn model_from_parts(manifest: &Manifest, payload: &[f32]) -> Result<Model> {
    let declared: usize = manifest.layers.iter().map(entry_len).sum();
    if declared != payload.len() {
        return Err(Error::WeightCount {
            expected: declared,
            actual: payload.len(),
        });
    }
    let take = |index: usize, range: &BlobRange, shape: Vec<usize>| -> Result<Tensor> {
        let end = range
            .offset
            .checked_add(range.len)
            .filter(|&e| e <= payload.len());
        let Some(end) = end else {
            return Err(Error::Manifest(format!(
                "layer {index}: range {}..+{} exceeds {} stored floats",
                range.offset,
                range.len,
                payload.len()
            )));
        };
        Tensor::new(shape, payload[range.offset..end].to_vec())
            .map_err(|e| Error::Manifest(format!("layer {index}: {e}")))
    };
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (index, entry) in manifest.layers.iter().enumerate() {
        let layer = match entry {
            LayerEntry::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weight,
                bias,
            } => LayerSpec::Conv2d(Conv2d {
                in_channels: *in_channels,
                out_channels: *out_channels,
                kernel: *kernel,
                stride: *stride,
                padding: *padding,
                weight: take(
                    index,
                    weight,
                    vec![*out_channels, *in_channels, *kernel, *kernel],
                )?,
                bias: bias
                    .as_ref()
                    .map(|b| take(index, b, vec![*out_channels]))
                    .transpose()?,
            }),
            LayerEntry::Relu => LayerSpec::Relu,
            LayerEntry::MaxPool2d {
                kernel,
                stride,
                padding,
            } => LayerSpec::MaxPool2d(Pool {
                kernel: *kernel,
                stride: *stride,
                padding: *padding,
            }),
            LayerEntry::AvgPool2d {
                kernel,
                stride,
                padding,
            } => LayerSpec::AvgPool2d(Pool {
                kernel: *kernel,
                stride: *stride,
                padding: *padding,
            }),
            LayerEntry::GlobalAvgPool => LayerSpec::GlobalAvgPool,
            LayerEntry::Linear {
                in_features,
                out_features,
                weight,
                bias,
            } => LayerSpec::Linear(Linear {
                in_features: *in_features,
                out_features: *out_features,
                weight: take(index, weight, vec![*out_features, *in_features])?,
                bias: bias
                    .as_ref()
                    .map(|b| take(index, b, vec![*out_features]))
                    .transpose()?,
            }),
            LayerEntry::Softmax => LayerSpec::Softmax,
            LayerEntry::Flatten => LayerSpec::Flatten,
        };
        layers.push(layer);
    }
    Model::new(
        manifest.name.clone(),
        layers,
        manifest.input_shape.clone(),
        manifest.class_names.clone(),
    )
}

fn entry_len(entry: &LayerEntry) -> usize {
    match entry {
        LayerEntry::Conv2d { weight, bias, .. } | LayerEntry::Linear { weight, bias, .. } => {
            weight.len + bias.map_or(0, |b| b.len)
        }
        _ => 0,
    }
}

/// Splits a model into its manifest (naming `weights_file`) and flat payload.
pub fn model_to_parts(model: &Model, weights_file: &str) -> (Manifest, Vec<f32>) {
    let mut payload = Vec::with_capacity(model.param_count());
    let mut push = |t: &Tensor| {
        let range = BlobRange {
            offset: payload.len(),
            len: t.len(),
        };
        payload.extend_from_slice(t.data());
        range
    };
    let layers = model
        .layers
        .iter()
        .map(|layer| match layer {
            LayerSpec::Conv2d(c) => LayerEntry::Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
                weight: push(&c.weight),
                bias: c.bias.as_ref().map(&mut push),
            },
            LayerSpec::Relu => LayerEntry::Relu,
            LayerSpec::MaxPool2d(p) => LayerEntry::MaxPool2d {
                kernel: p.kernel,
                stride: p.stride,
                padding: p.padding,
            },
            LayerSpec::AvgPool2d(p) => LayerEntry::AvgPool2d {
                kernel: p.kernel,
                stride: p.stride,
                padding: p.padding,
            },
            LayerSpec::GlobalAvgPool => LayerEntry::GlobalAvgPool,
            LayerSpec::Linear(l) => LayerEntry::Linear {
                in_features: l.in_features,
                out_features: l.out_features,
                weight: push(&l.weight),
                bias: l.bias.as_ref().map(&mut push),
            },
            LayerSpec::Softmax => LayerEntry::Softmax,
            LayerSpec::Flatten => LayerEntry::Flatten,
        })
        .collect();
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        version: MANIFEST_VERSION,
        name: model.name.clone(),
        input_shape: model.input_shape.clone(),
        class_names: model.class_names.clone(),
        weights: weights_file.to_string(),
        layers,
    };
    (manifest, payload)
}

pub fn encode_blob(payload: &[f32]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(8 + 4 * payload.len());
    bytes.extend_from_slice(WEIGHT_MAGIC);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Writes `<manifest_path>` and a sibling `<stem>.bin` blob.
pub fn save_model(model: &Model, manifest_path: impl AsRef<Path>) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model");
    let weights_file = format!("{stem}.bin");
    let (manifest, payload) = model_to_parts(model, &weights_file);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
    let blob = blob_path(manifest_path, &weights_file);
    fs::write(&blob, encode_blob(&payload)).map_err(|e| Error::io(&blob, e))
}
