use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least one interior node, got {0}")]
    InvalidGrid(usize),
    #[error("invalid time mesh: T = {horizon}, M = {m_steps}")]
    InvalidTimeMesh { horizon: f64, m_steps: usize },
    #[error("length mismatch: expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid interval ({a}, {b})")]
    InvalidInterval { a: f64, b: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("singular 2x2 pivot at node {node}")]
    SingularPivot { node: usize },
    #[error("rank-one update breaks down: denominator {denominator:e}")]
    RankOneBreakdown { denominator: f64 },
    #[error("solution blew up at step {step}: norm {norm:e}")]
    BlowUp { step: usize, norm: f64 },
    #[error("conjugate gradient did not converge: relative residual {residual:e} after {iterations} iterations")]
    CgNoConvergence { iterations: usize, residual: f64 },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("expected strictly positive data, got {0}")]
    NonPositive(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidTimeMesh { .. } => "invalid_time_mesh",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::InvalidInterval { .. } => "invalid_interval",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::SingularPivot { .. } => "singular_pivot",
            Error::RankOneBreakdown { .. } => "rank_one_breakdown",
            Error::BlowUp { .. } => "blow_up",
            Error::CgNoConvergence { .. } => "cg_no_convergence",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::NonPositive(_) => "non_positive",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    /// Whether the error comes from bad input rather than from a solve.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::InvalidTimeMesh { .. }
                | Error::LengthMismatch { .. }
                | Error::InvalidInterval { .. }
                | Error::InvalidParameter(_)
                | Error::TooFewPoints { .. }
                | Error::NonPositive(_)
        )
    }
}
