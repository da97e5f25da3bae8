use crate::tensor::Mode;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("duplicate entry at ({i}, {j}, {k})")]
    DuplicateEntry { i: usize, j: usize, k: usize },

    #[error("{mode} index {index} out of range for dimension {dim}")]
    IndexOutOfRange { mode: Mode, index: usize, dim: usize },

    #[error("invalid value {value} at ({i}, {j}, {k}): QoS values must be finite and nonnegative")]
    InvalidValue { i: usize, j: usize, k: usize, value: f64 },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty entry set: {0}")]
    Empty(&'static str),

    #[error("{mode} dimension mismatch: model has {model}, data needs {data}")]
    DimMismatch { mode: Mode, model: usize, data: usize },

    #[error("non-finite or exploding value in {group}")]
    NonFinite { group: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
