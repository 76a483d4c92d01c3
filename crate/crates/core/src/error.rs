use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("layer {index} ({kind}): expected input {expected}, got {actual:?}")]
    LayerShape {
        index: usize,
        kind: &'static str,
        expected: String,
        actual: Vec<usize>,
    },

    #[error("invalid layer {index} ({kind}): {reason}")]
    InvalidLayer {
        index: usize,
        kind: &'static str,
        reason: String,
    },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("invalid split index {index}: {reason}")]
    InvalidSplit { index: usize, reason: String },

    #[error("CAM requires global pooling: {0}")]
    CamUnsupported(String),

    #[error("unknown preset `{0}` (expected one of: tiny8, mid16)")]
    UnknownPreset(String),

    #[error("unknown method `{0}` (expected one of: recipro, cam, grad, score, ablation, fake)")]
    UnknownMethod(String),

    #[error("bad magic in weight file {path}: expected RXAIW001")]
    BadMagic { path: PathBuf },

    #[error("weight count mismatch: manifest declares {expected} floats, blob holds {actual}")]
    WeightCount { expected: usize, actual: usize },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("invalid image: {0}")]
    Image(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
