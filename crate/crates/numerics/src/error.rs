use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("kernel width {kernel} exceeds padded input length {padded}")]
    KernelTooWide { kernel: usize, padded: usize },
    #[error("target id {id} out of range for vocabulary of {vocab}")]
    TargetOutOfRange { id: usize, vocab: usize },
    #[error("every target position is padding; mean loss is undefined")]
    AllPadding,
    #[error("expected a scalar output, got shape {0:?}")]
    NonScalar(Vec<usize>),
    #[error("variable does not belong to this computation record")]
    ForeignVar,
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("malformed tensor stream: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
