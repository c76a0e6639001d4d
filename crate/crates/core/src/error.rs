//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes disagree where they are required to match.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An argument is outside its documented range.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// NaN or infinity where finite values are required.
    #[error("non-finite values: {0}")]
    NonFinite(String),

    /// A mask contains values other than exactly 0 and 1.
    #[error("mask is not binary: {0}")]
    NonBinaryMask(String),

    /// Random mask generation could not satisfy its constraints.
    #[error("mask generation failed: {0}")]
    MaskGen(String),

    /// A loss or parameter went non-finite during training.
    #[error("training failure: {0}")]
    Training(String),

    /// Checkpoint serialization, deserialization, or version mismatch.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A dataset manifest is inconsistent or references missing files.
    #[error("manifest error: {0}")]
    Manifest(String),

    /// Config file parse or validation failure.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}
