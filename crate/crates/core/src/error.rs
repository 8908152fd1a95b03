use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed raster {path}: {reason}")]
    Raster { path: PathBuf, reason: String },

    #[error("malformed model file: {0}")]
    Model(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}: label value {value} is outside [0, {classes}) and is not the void id")]
    LabelOutOfRange {
        path: PathBuf,
        value: u8,
        classes: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid class set: {0}")]
    ClassSet(String),

    #[error("no labelled pixels: {0}")]
    NoLabels(String),

    #[error("unknown feature extractor `{0}`")]
    UnknownExtractor(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cluster {cluster} (classes {classes:?}) has no training images")]
    EmptyCluster { cluster: usize, classes: Vec<usize> },

    #[error("missing bundle component {0}")]
    MissingComponent(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
