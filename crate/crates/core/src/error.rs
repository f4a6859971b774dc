use thiserror::Error;

pub type Result<T> = std::result::Result<T, VarError>;

#[derive(Debug, Error)]
pub enum VarError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unstable VAR: companion spectral radius {radius:.6} is not below 1")]
    Unstable { radius: f64 },

    #[error("matrix is not positive definite: leading minor {minor} of {size} is not positive")]
    NotPositiveDefinite { minor: usize, size: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl VarError {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            VarError::InvalidArgument(_) => 1,
            VarError::Dimension(_)
            | VarError::Data(_)
            | VarError::Io(_)
            | VarError::Csv(_)
            | VarError::Json(_) => 2,
            VarError::Unstable { .. }
            | VarError::NotPositiveDefinite { .. }
            | VarError::Singular(_)
            | VarError::Numerical(_) => 3,
        }
    }
}
