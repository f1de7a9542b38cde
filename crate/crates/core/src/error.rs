use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("illuminant must be in [1, 255], got {0}")]
    InvalidIlluminant(u32),
    #[error("expected {expected} channels, got {actual}")]
    ChannelCount { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid stain matrix: {0}")]
    InvalidStainMatrix(String),

    #[error("bad magic: not a CMAP file")]
    BadMagic,
    #[error("unsupported CMAP version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("dimension overflow: {width}x{height}x{stains}")]
    DimensionOverflow { width: u32, height: u32, stains: u32 },

    #[error("no tissue found")]
    NoTissue,
    #[error("singular stain matrix (condition number {0:.3e})")]
    SingularStainMatrix(f64),
    #[error("empty mask")]
    EmptyMask,
    #[error("no saffron column in stain matrix")]
    NoSaffronColumn,

    #[error("no signal: image has no variation")]
    NoSignal,

    #[error("feature spec mismatch: {0}")]
    FeatureMismatch(String),
    #[error("degenerate regression: all x values are equal")]
    DegenerateRegression,

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
