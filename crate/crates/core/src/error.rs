use thiserror::Error;

/// Errors raised by the modelling, fitting and data layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("transition matrix is not row-stochastic: {0}")]
    NotStochastic(String),

    #[error("transition matrix is reducible; stationary distribution is not unique")]
    ReducibleChain,

    #[error("transition matrix has a zero entry at ({row}, {col}); working form undefined")]
    BoundaryTpm { row: usize, col: usize },

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid sequence {id:?}: {reason}")]
    InvalidSequence { id: String, reason: String },

    #[error("sequence set is empty")]
    EmptyData,

    #[error("invalid penalty configuration: {0}")]
    InvalidPenalty(String),

    #[error("invalid fit configuration: {0}")]
    InvalidFitConfig(String),

    #[error("objective is not finite at every starting point")]
    NonFiniteObjective,

    #[error("invalid lambda grid: {0}")]
    InvalidGrid(String),

    #[error("no converged point on the path")]
    NoConvergedPoint,

    #[error("path has no lambda = 0 point for the MLE scheme")]
    NoUnpenalizedPoint,

    #[error("no forecast records")]
    EmptyRecords,

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("{}", format_row_errors(.0))]
    InvalidRows(Vec<RowError>),

    #[error("missing CSV column {0:?}")]
    MissingColumn(String),

    #[error("unknown category value: {0}")]
    UnknownCategory(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One rejected CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based line number in the file (header is line 1).
    pub line: u64,
    pub message: String,
}

fn format_row_errors(rows: &[RowError]) -> String {
    let mut out = format!("{} malformed row(s)", rows.len());
    for r in rows.iter().take(20) {
        out.push_str(&format!("; line {}: {}", r.line, r.message));
    }
    if rows.len() > 20 {
        out.push_str("; ...");
    }
    out
}

pub type Result<T> = std::result::Result<T, Error>;
