use thiserror::Error;

/// Library-wide error type.
///
/// `compile` reporting `converged = false` and `calibrate` reporting a
/// non-bracketed minimum are results, not errors; only contract violations
/// (bad shapes, non-physical inputs, singular systems) land here.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not unitary (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    NotUnitary { residual: f64, tolerance: f64 },

    #[error("unsupported qudit dimension {0} (supported: 2 and 3)")]
    UnsupportedDimension(usize),

    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    #[error("non-physical density matrix: {0}")]
    NonPhysicalState(String),

    #[error("confusion matrix is numerically singular (condition number {0:.3e})")]
    SingularConfusion(f64),

    #[error("tomography design is rank deficient (rank {rank}, need {need})")]
    RankDeficientDesign { rank: usize, need: usize },

    #[error("integration diverged: {0}")]
    Integration(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
