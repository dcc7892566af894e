use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid filter parameters: {0}")]
    InvalidFilter(String),

    #[error("unsupported image: {0}")]
    UnsupportedImage(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset too small: need {needed}, have {have}")]
    DatasetTooSmall { needed: usize, have: usize },

    #[error("correlation undefined: sensitivity of filter `{0}` is constant")]
    ConstantColumn(String),

    #[error("model format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("{path}: {msg}")]
    DataFile { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
