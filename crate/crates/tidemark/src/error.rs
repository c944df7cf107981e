//! Crate-wide error type.

/// Errors produced by the fallible operations in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying I/O failure while reading or writing a file.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed or unsupported file contents.
    #[error("format error: {0}")]
    Format(String),
    /// An input that must be non-empty was empty.
    #[error("empty input: {0}")]
    Empty(&'static str),
    /// Mismatched dimensions between values that must agree.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Mismatched sample rates where equal rates are required.
    #[error("sample-rate mismatch: expected {expected} Hz, got {got} Hz")]
    Rate { expected: u32, got: u32 },
    /// Input shorter than the minimum the operation supports.
    #[error("input too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },
    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Input whose content leaves the operation ill-defined (e.g. an all-zero
    /// signal where a power ratio is required).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// A non-finite value appeared during iterative numerics.
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
