use thiserror::Error;

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("training data is empty")]
    EmptyInput,
    #[error("need at least two distinct classes in the labels, found {0}")]
    SingleClass(usize),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("model has no splits, gain importance is undefined")]
    NoSplits,
    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GbdtError>;
