use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate column `{0}`: zero variance")]
    DegenerateColumn(String),

    #[error("degenerate residual for `{0}`: nothing left after removing covariates")]
    DegenerateResidual(String),

    #[error("collinear covariates: {}", .0.join(", "))]
    Collinear(Vec<String>),

    #[error("insufficient data: {have} rows, need at least {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("no convergence after {iterations} sweeps (KKT residual {kkt_residual:.3e})")]
    NoConvergence { iterations: usize, kkt_residual: f64 },

    #[error("schema mismatch: {0}")]
    Schema(String),
}
