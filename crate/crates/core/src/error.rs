use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("weight sequence is empty")]
    EmptyWeights,

    #[error("weight sequence increases at index {index}")]
    NotMonotone { index: usize },

    #[error("weight sequence has a negative entry at index {index}")]
    NegativeWeight { index: usize },

    #[error("weight sequence has a non-finite entry at index {index}")]
    NonFiniteWeight { index: usize },

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("instance format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
