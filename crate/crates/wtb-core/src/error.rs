use crate::f1::LapModelFit;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum WtbError {
    #[error("invalid action index {action}: instance has {num_actions} actions")]
    InvalidAction { action: usize, num_actions: usize },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("validation failed: {0}")]
    Validation(String),

    /// Row-addressed CSV ingestion failure. Rows are 1-based data rows
    /// (the header is row 0).
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("normalization failed: {0}")]
    Normalization(String),

    /// The model fit never reached the convergence tolerance from any start.
    /// Carries the best parameters found so far.
    #[error("fit did not converge: {message}")]
    FitFailure {
        message: String,
        best: Box<LapModelFit>,
    },

    #[error("no loss mapped for action {action} at tally value {tally}")]
    UnmappedTally { action: usize, tally: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, WtbError>;
