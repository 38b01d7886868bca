use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed image header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{path}: unsupported bit depth (maxval {maxval}, only 8-bit maxval 255 is supported)")]
    UnsupportedDepth { path: PathBuf, maxval: u32 },

    #[error("{path}: manifest schema violation at line {line}, column {column}: {message}")]
    ManifestSchema {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("manifest: duplicate slide_id `{0}`")]
    DuplicateSlideId(String),

    #[error("manifest: slide `{slide_id}` annotation ({x}, {y}) outside {width}x{height} bounds")]
    AnnotationOutOfBounds {
        slide_id: String,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient tissue: {found} tissue pixels, at least {required} required")]
    InsufficientTissue { found: usize, required: usize },

    #[error("tile origin ({x}, {y}) is not part of the tile grid")]
    TileNotInGrid { x: usize, y: usize },

    #[error("weight `{name}`: {reason}")]
    WeightShape { name: String, reason: String },

    #[error("weight file {path}: {reason}")]
    WeightFormat { path: PathBuf, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("detections file {path}, line {line}: {reason}")]
    DetectionsFormat {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
