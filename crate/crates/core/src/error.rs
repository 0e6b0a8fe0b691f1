use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error)]
pub enum KfpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Argument lies on a pole or outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameters outside the envelope that has been validated for an evaluator.
    #[error("unsupported parameter region: {0}")]
    Unsupported(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("point outside chart: {0}")]
    OutsideChart(String),

    #[error("parameter window violated: {0}")]
    Window(String),

    #[error("constraint gate failed: {0}")]
    Constraint(String),

    #[error("sampler starvation after {proposals} proposals")]
    SamplerStarvation { proposals: u64 },

    #[error("CFL condition violated: dt*V/dx = {0:.4} > 1")]
    Cfl(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("stencil exits the function domain at {0}")]
    StencilDomain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KfpError>;
