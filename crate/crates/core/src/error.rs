use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{column}`")]
    MissingColumn { column: String },

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: binary covariate has value {value}, expected 0 or 1")]
    BinaryOutOfRange {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("row {row}, column `{column}`: missing value (use drop-missing to discard incomplete rows)")]
    MissingValue { row: usize, column: String },

    #[error("schema line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("no target units remain after trimming to trial support")]
    EmptyAfterTrim,

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("logistic fit did not converge: complete or quasi-complete separation")]
    Separation,

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("model fit did not converge after {iterations} iterations (max |score| = {max_abs_score:e})")]
    NotConverged {
        iterations: usize,
        max_abs_score: f64,
    },

    #[error("non-finite weight for trial unit {unit}")]
    NonFiniteWeight { unit: usize },

    #[error("R² = {0} is outside [0, 1)")]
    R2OutOfRange(f64),

    #[error("zero denominator: {0}")]
    ZeroDenominator(String),

    #[error("inconsistent bounds: lower bound is positive while upper bound is negative")]
    InconsistentBounds,

    #[error("{failed} of {total} replicates failed (limit is 5%)")]
    ReplicateFailure { failed: usize, total: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input or arguments).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Separation
                | Error::RankDeficient(_)
                | Error::NotConverged { .. }
                | Error::NonFiniteWeight { .. }
                | Error::ZeroDenominator(_)
                | Error::ReplicateFailure { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
