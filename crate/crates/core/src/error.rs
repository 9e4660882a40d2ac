use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix not positive definite: non-positive pivot at index {index} (value {pivot})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid field `{field}`: {constraint}")]
    InvalidField { field: String, constraint: String },

    #[error("no root in domain after bracket expansion")]
    NoRoot,

    #[error("non-finite level sample rejected: {0}")]
    NonFiniteSample(f64),

    #[error("insufficient levels for rate fit: need 3 usable levels, found {0}")]
    InsufficientLevels(usize),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
