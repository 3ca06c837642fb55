//! Crate-wide error type.
//!
//! Errors are split by how the caller should react: `Schema` and `Row` point
//! at malformed input files, `InvalidInput` and `OutOfRange` at bad arguments,
//! and the analysis variants at data that cannot support the requested fit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The input table is missing a required column or the column map is
    /// inconsistent. Nothing row-level can be salvaged.
    #[error("schema error: {0}")]
    Schema(String),

    /// A single row failed validation. Carries the 1-based line number of the
    /// offending record so diagnostics can point back into the source file.
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numeric input falls outside the validity range of the model it
    /// feeds. The engine refuses to clamp silently.
    #[error("{field} = {value} outside valid range [{lo}, {hi}]")]
    OutOfRange {
        field: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// The partial likelihood has no finite maximizer (monotone likelihood,
    /// typically from perfect separation on the named covariate).
    #[error("monotone partial likelihood: coefficient for `{0}` diverged; the data separate on this covariate")]
    MonotoneLikelihood(String),

    /// The observed information (or an analogous design matrix) is singular,
    /// so standard errors cannot be computed.
    #[error("singular information matrix: {0}")]
    SingularMatrix(String),

    /// A test statistic is undefined for the given data (zero variance, empty
    /// margin, no events, and similar degeneracies).
    #[error("statistic undefined: {0}")]
    UndefinedStatistic(String),

    /// No threshold pair in the sweep grid satisfies the feasibility
    /// constraints.
    #[error("threshold sweep infeasible: {0}")]
    SweepInfeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
