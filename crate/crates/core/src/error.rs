use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid spacing {h} exceeds {max} required for a field solve")]
    Resolution { h: f64, max: f64 },

    #[error("dimension {0} not supported by this operation")]
    Dimension(usize),

    #[error("particles {0} and {1} overlap or violate the hardcore distance")]
    Overlap(usize, usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("volume fraction {0} is not below 1/2")]
    Density(f64),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64, history: Vec<f64> },

    #[error("rejection sampling failed after {0} attempts")]
    Rejection(usize),

    #[error("need at least {needed} realizations, got {got}")]
    InsufficientRealizations { needed: usize, got: usize },

    #[error("{0}")]
    Data(String),

    #[error("schema version {found} is newer than supported version {supported}")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{failed} of {total} realizations failed, above the 5% cap")]
    FailureCap { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
