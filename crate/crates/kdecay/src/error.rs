use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),

    #[error("grid quality check failed for {moment}: got {value:.6e}, expected {expected:.6e} (tol {tol:.1e})")]
    GridQuality {
        moment: String,
        value: f64,
        expected: f64,
        tol: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("frequency range: {0}")]
    Range(String),

    #[error("singular multiplier: {0}")]
    Singularity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("rejected configuration: {0}")]
    Hypothesis(String),

    #[error("operator rejected: {0}")]
    Rejected(String),

    #[error("kappa_0 too large: {0}")]
    KappaTooLarge(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
