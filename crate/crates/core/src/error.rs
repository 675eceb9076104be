use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("matrix is not Hermitian (asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("matrix is identically zero")]
    ZeroMatrix,
    #[error("columns are not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("matrix is not positive definite (min eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("projection precoder needs more transmit antennas ({mts}) than primary receive antennas ({mrp})")]
    NotImplementable { mts: usize, mrp: usize },
    #[error("dual point has no null space (min eigenvalue {0:e})")]
    EmptyNullSpace(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
