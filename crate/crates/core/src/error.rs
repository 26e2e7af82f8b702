use thiserror::Error;

/// Errors produced by estimation, diagnostics and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented precondition (shape, sign, finiteness, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two arguments that must agree in length or shape do not.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    /// A least-squares problem has more columns than rows or is singular.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The restricted design is numerically rank deficient.
    #[error("rank deficient design: {0}")]
    RankDeficient(String),

    /// The coordinate descent loop hit its sweep budget.
    #[error("solver did not converge within {sweeps} sweeps (max KKT violation {kkt:.3e})")]
    NonConvergence { sweeps: usize, kkt: f64 },

    /// A quantity needed by a formula is undefined for the given inputs
    /// (zero denominator, exact recovery, ...).
    #[error("undefined: {0}")]
    Undefined(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
