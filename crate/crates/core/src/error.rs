use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the forecasting engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("input has no numeric columns")]
    NoNumericColumns,

    #[error("column `{0}` contains no numeric values")]
    NonNumericColumn(String),

    #[error("timestamp column `{0}` not found in header")]
    MissingTimestampColumn(String),

    #[error("cannot parse timestamp `{value}` at row {row}")]
    BadTimestamp { row: usize, value: String },

    #[error("timestamps are not strictly increasing at row {row} ({prev} then {next})")]
    NonMonotoneTimestamps { row: usize, prev: i64, next: i64 },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("value outside transform domain: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{0} used before fit")]
    NotFitted(&'static str),

    #[error("no viable pipeline: every candidate failed")]
    NoViablePipeline,
}

pub type Result<T> = std::result::Result<T, Error>;
