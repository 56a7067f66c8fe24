use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent dimensions, unsupported link, or invalid settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the domain of a function (t <= 0, variance <= 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A model invariant does not hold (e.g. an all-zero gating column).
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// A numerical procedure failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
