use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the histology pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid downscale factor {0}")]
    InvalidFactor(i64),

    #[error("input has no intensity variance")]
    NoVariance,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("superpixel {superpixel} centroid lies in polygons of different classes")]
    AmbiguousAnnotation { superpixel: usize },

    #[error("coordinate ({x}, {y}) is outside the label map")]
    OutOfBounds { x: f64, y: f64 },

    #[error("texture is degenerate: {0}")]
    DegenerateTexture(&'static str),

    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),

    #[error("invalid feature input: {0}")]
    InvalidFeature(String),

    #[error("no labeled samples available for training")]
    EmptyTrainingSet,

    #[error("cell {cell} has no region label")]
    MissingContext { cell: usize },

    #[error("incompatible model: {0}")]
    IncompatibleModel(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
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
