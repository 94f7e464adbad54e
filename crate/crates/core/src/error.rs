use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("embedding length mismatch: {first_id} has {first_len} values, {other_id} has {other_len}")]
    EmbeddingLengthMismatch {
        first_id: String,
        first_len: usize,
        other_id: String,
        other_len: usize,
    },

    #[error("no effective imaging region found")]
    EmptyRoi,

    #[error("polar prior is degenerate: every patch has coverage at or below tau")]
    DegeneratePrior,

    #[error("mask ratio {mask_ratio} leaves {visible} visible of {total} patches")]
    InvalidMaskRatio {
        mask_ratio: f64,
        visible: usize,
        total: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("manifest error at line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
