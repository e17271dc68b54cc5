use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("expected single channel image, found {channels} channels")]
    MultiChannel { channels: u8 },
    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error("unsupported file extension for {}", .0.display())]
    UnsupportedFormat(PathBuf),
    #[error("malformed array header: {0}")]
    MalformedHeader(String),
    #[error("dtype mismatch: expected {expected}, found {found}")]
    DtypeMismatch { expected: &'static str, found: String },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("label {0} exceeds 16-bit range")]
    LabelOverflow(u64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
