use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid value for `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("potential does not fit the box: {0}")]
    Incompatible(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("time {time} lies beyond the wrap-around horizon T_wrap = {horizon}")]
    BeyondWrapHorizon { time: f64, horizon: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("eigensolver breakdown: {0}")]
    Breakdown(String),

    #[error("dense lattice of {points} points exceeds the cap of {cap}")]
    MemoryGuard { points: usize, cap: usize },

    #[error("Picard iteration is not contracting (last ratio {ratio:.4} after {iterations} iterations)")]
    NonContraction { ratio: f64, iterations: usize },

    #[error("Picard iterate left the ball of radius {radius:.6e} (norm {norm:.6e})")]
    LeftBall { norm: f64, radius: f64 },

    #[error("blow-up guard tripped at t = {time}: sup norm {sup:.6e}")]
    BlowUp { time: f64, sup: f64 },

    #[error("fit residual {residual:.3e} above threshold {threshold:.3e}")]
    PoorFit { residual: f64, threshold: f64 },

    #[error("time slices do not match: {0}")]
    SliceMismatch(String),

    #[error("evolution trace is empty")]
    EmptyTrace,

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument { name, reason: reason.into() }
    }

    /// Stable machine-readable label.
    pub fn label(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridMismatch => "grid_mismatch",
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::Incompatible(_) => "incompatible_potential",
            Error::Precondition(_) => "precondition",
            Error::BeyondWrapHorizon { .. } => "beyond_wrap_horizon",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Breakdown(_) => "eigensolver_breakdown",
            Error::MemoryGuard { .. } => "memory_guard",
            Error::NonContraction { .. } => "non_contraction",
            Error::LeftBall { .. } => "left_ball",
            Error::BlowUp { .. } => "blow_up",
            Error::PoorFit { .. } => "poor_fit",
            Error::SliceMismatch(_) => "slice_mismatch",
            Error::EmptyTrace => "empty_trace",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// True when the failure comes from bad input rather than from the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::GridMismatch
                | Error::InvalidArgument { .. }
                | Error::Incompatible(_)
                | Error::Precondition(_)
                | Error::BeyondWrapHorizon { .. }
                | Error::MemoryGuard { .. }
                | Error::SliceMismatch(_)
                | Error::EmptyTrace
        )
    }
}
