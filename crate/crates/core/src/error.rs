use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid film geometry: {0}")]
    Geometry(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("inadmissible force field: {0}")]
    Force(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("line search failed after {iterations} iterations (energy {energy:e})")]
    LineSearch { iterations: usize, energy: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::Geometry(_) => 2,
            Error::Force(_) | Error::Dimension { .. } | Error::Numeric(_) | Error::LineSearch { .. } => 3,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 4,
        }
    }
}
