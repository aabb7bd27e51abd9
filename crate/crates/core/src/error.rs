use thiserror::Error;

/// Crate-wide error type.
///
/// The variants map onto the CLI exit-code contract: `Hypothesis` is a
/// rejected input (exit 2), `Invariant` is a runtime conservation or
/// positivity failure (exit 3), `SolverDiverged` is a linear-solver
/// failure (exit 4). Everything else is ordinary I/O or format trouble.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value in field `{field}` (first at index {index})")]
    NonFinite { field: String, index: usize },

    #[error("hypothesis `{id}` violated: {msg}")]
    Hypothesis { id: &'static str, msg: String },

    #[error("invariant `{id}` violated at t = {t}: {msg}")]
    Invariant {
        id: &'static str,
        t: f64,
        msg: String,
    },

    #[error("CFL violation at t = {t}: dt = {dt} exceeds advective limit {limit}")]
    CflViolation { t: f64, dt: f64, limit: f64 },

    #[error("linear solver did not converge: residual {residual} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },

    #[error("malformed CSV at row {row}: {msg}")]
    Csv { row: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code for the CLI: 0 clean, 2 hypothesis rejection,
    /// 3 invariant violation, 4 solver non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Hypothesis { .. } | Error::Config(_) => 2,
            Error::Invariant { .. } | Error::NonFinite { .. } | Error::CflViolation { .. } => 3,
            Error::SolverDiverged { .. } => 4,
            _ => 1,
        }
    }
}
