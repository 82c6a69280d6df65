use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the imputation and imputability pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("cannot parse cell at row {row}, column '{column}': '{value}'")]
    Ingestion {
        row: usize,
        column: String,
        value: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("column '{0}' is degenerate (zero variance or too few observed values)")]
    DegenerateColumn(String),

    #[error("columns '{a}' and '{b}' share only {shared} jointly observed rows (need {needed})")]
    InsufficientOverlap {
        a: String,
        b: String,
        shared: usize,
        needed: usize,
    },

    #[error("column '{0}' has no observed values")]
    AllMissing(String),

    #[error("row {0} has no observed values")]
    EmptyRow(usize),

    #[error("missing cells present in column '{0}' where complete data is required")]
    MissingCells(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("component {component} did not converge within {iterations} iterations (last delta {delta:e})")]
    NonConvergence {
        component: usize,
        iterations: usize,
        delta: f64,
    },

    #[error("{method} did not converge within {iterations} iterations (last relative change {delta:e})")]
    EmNonConvergence {
        method: &'static str,
        iterations: usize,
        delta: f64,
        trace: Vec<f64>,
    },

    #[error("singular system while fitting column '{0}'")]
    Singular(String),

    #[error("column '{column}' has {observed} observed rows, need at least {needed}")]
    InsufficientObservations {
        column: String,
        observed: usize,
        needed: usize,
    },

    #[error("feature sets disagree: {0}")]
    FeatureMismatch(String),

    #[error("pipeline stage '{stage}' failed{}: {source}", replicate.map(|r| format!(" (replicate {r})")).unwrap_or_default())]
    Stage {
        stage: String,
        replicate: Option<usize>,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, stage: &str, replicate: Option<usize>) -> Self {
        Error::Stage {
            stage: stage.to_owned(),
            replicate,
            source: Box::new(self),
        }
    }
}
