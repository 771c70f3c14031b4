use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("cannot encode {path}: {message}")]
    Encode { path: PathBuf, message: String },

    #[error("unsupported bit depth in {path}: only 8-bit images are accepted")]
    UnsupportedDepth { path: PathBuf },

    #[error("rectangle ({x}, {y}, {w}, {h}) exceeds {width}x{height} image")]
    OutOfBounds {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("gamma fit failed: {0}")]
    GammaFit(String),

    #[error("malformed feature map {path}: {message}")]
    FeatureMap { path: PathBuf, message: String },

    #[error("malformed table {path}: {message}")]
    Table { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Encode { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
