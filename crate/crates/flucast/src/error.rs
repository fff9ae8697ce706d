//! Error type shared across the toolkit.

use thiserror::Error;

/// Errors produced by data handling, model construction, training and scoring.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix/vector dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// A numeric parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An argument or input collection violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A required date is missing from a daily series.
    #[error("data gap: no value for {date}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    DataGap {
        date: chrono::NaiveDate,
        context: Option<String>,
    },

    /// A series is too short for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Too few prior years to compute a historical average.
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    /// Batch statistics are undefined (e.g. single-sample batch in train mode).
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    /// A series is constant where variation is required.
    #[error("constant series: {0}")]
    ConstantSeries(String),

    /// Model or experiment configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called on a model of the wrong kind.
    #[error("model misuse: {0}")]
    Misuse(String),

    /// Training produced a non-finite value.
    #[error("non-finite value during {context} (epoch {epoch}, batch {batch})")]
    NonFinite {
        context: &'static str,
        epoch: usize,
        batch: usize,
    },

    /// CSV or config text could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An expected artifact is missing or inconsistent.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
