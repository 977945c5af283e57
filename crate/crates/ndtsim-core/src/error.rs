use thiserror::Error;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("series '{id}' too short: length {len}, need at least {min}")]
    SeriesTooShort { id: String, len: usize, min: usize },

    #[error("empty sample set")]
    EmptySamples,

    #[error("need at least {min} models, got {got}")]
    NotEnoughModels { got: usize, min: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
