use thiserror::Error;

/// Errors produced by the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("frequency band overflow: {0}")]
    BandOverflow(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("partition-of-unity hypothesis {hypothesis} failed: {witness}")]
    Hypothesis { hypothesis: u8, witness: String },

    #[error("enlargement verification failed after {attempts} attempts: {witness}")]
    Enlargement { attempts: usize, witness: String },

    #[error("non-regular collection: {0}")]
    NotRegular(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
