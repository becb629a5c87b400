use thiserror::Error;

/// Errors shared by the KS kernels and the integrators.
#[derive(Debug, Error)]
pub enum Error {
    /// The KS chart is singular at a binary collision (|q| = 0 or |Q|² = 0).
    #[error("collision point: {0}")]
    CollisionPoint(String),

    /// A conservation guard tripped during fixed-step integration.
    #[error(
        "step too large: {quantity} drift {drift:.3e} exceeds guard {guard:.3e} at s = {s:.6e}"
    )]
    StepTooLarge {
        quantity: &'static str,
        drift: f64,
        guard: f64,
        s: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index error: {0}")]
    IndexError(String),
}

pub type Result<T> = std::result::Result<T, Error>;
