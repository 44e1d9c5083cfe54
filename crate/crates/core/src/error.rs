use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: non-numeric value `{value}` in column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("individual {individual}, task {task}: chosen alternative unavailable")]
    ChosenUnavailable { individual: String, task: String },

    #[error("duplicate row for individual {individual}, task {task}, alternative {alt}")]
    DuplicateAlternative {
        individual: String,
        task: String,
        alt: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite utility encountered")]
    NonFiniteUtility,

    #[error("value {value} is infeasible under transform {transform}")]
    Infeasible { value: f64, transform: String },

    #[error("degenerate individual likelihood for individual index {0}")]
    DegenerateLikelihood(usize),

    #[error("cannot split {individuals} individuals into {folds} folds")]
    TooManyFolds { folds: usize, individuals: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
