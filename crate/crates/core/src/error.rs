use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("inadmissible shape: {0}")]
    Inadmissible(String),

    #[error("invalid resolution: {0}")]
    InvalidResolution(String),

    #[error("invalid boundary field: {0}")]
    InvalidField(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate tangent at theta = {theta}")]
    DegenerateTangent { theta: f64 },

    #[error("conjugate gradients stalled after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("unsupported Sobolev exponent {0} (expected 0, 0.5 or 1)")]
    UnsupportedExponent(f64),

    #[error("Hessian symmetry defect {defect:.3e} exceeds tolerance {tolerance:.1e}")]
    AsymmetricHessian { defect: f64, tolerance: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
