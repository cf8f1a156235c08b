//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("csv parse error at data row {row}: {message}")]
    CsvParse { row: usize, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("example {index} invalid: {message}")]
    InvalidExample { index: usize, message: String },

    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid probability distribution: {message}")]
    InvalidDistribution { message: String },

    #[error("no eligible partner for anchor with class {class}, domain {domain}")]
    NoEligiblePartner { class: usize, domain: usize },

    #[error(
        "partner selection starved after {retries} anchor retries; \
         last anchor had class {class}, domain {domain}"
    )]
    PartnerStarvation {
        class: usize,
        domain: usize,
        retries: usize,
    },

    #[error("invalid pair criterion: {0}")]
    InvalidCriterion(String),

    #[error("cannot parse strategy `{input}`: {message}")]
    InvalidStrategy { input: String, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("training diverged at epoch {epoch} (recent mean losses: {recent_losses:?})")]
    DivergentLoss {
        epoch: usize,
        recent_losses: Vec<f64>,
    },

    #[error("generated group (class {class}, domain {domain}) is empty in split `{split}`")]
    GroupStarved {
        class: usize,
        domain: usize,
        split: String,
    },

    #[error("model file format error at line {line}: {message}")]
    ModelFormat { line: usize, message: String },
}
