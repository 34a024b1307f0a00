use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("site index {site} out of range for a bath of {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("bath must contain at least one site")]
    EmptyBath,

    #[error("matrix is not Hermitian: max |A - A^dag| = {asymmetry:.3e}")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive semi-definite: smallest eigenvalue {min_eigenvalue:.3e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("operator is not unitary: max |U^dag U - I| = {deviation:.3e}")]
    NotUnitary { deviation: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} = {value} exceeds the configured limit {limit}")]
    TooLarge { what: &'static str, value: usize, limit: usize },

    #[error("conditional quantity undefined: pattern probability {probability:.3e} below threshold")]
    UndefinedConditional { probability: f64 },

    #[error("negative probability {value:.3e} for pattern {pattern}")]
    NegativeProbability { pattern: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid environment state: {0}")]
    InvalidEnvState(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
