use thiserror::Error;

/// Errors surfaced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates an instance invariant. `field` names the offending field.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// The linear relaxation (or the problem itself) has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unbounded linear program")]
    Unbounded,

    /// An objective term is undefined on the feasible region.
    #[error("degenerate objective: {0}")]
    DegenerateObjective(String),

    /// A construction-level guarantee did not hold. Never silently repaired.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
