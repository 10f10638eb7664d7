use crate::matrix::Domain;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid system configuration: {0}")]
    InvalidConfig(String),

    #[error("expected a matrix in the {expected} domain, got {found}")]
    WrongDomain { expected: Domain, found: Domain },

    #[error("shape mismatch: expected {expected:?}, got {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid pilot pattern: {0}")]
    InvalidPattern(String),

    #[error("invalid channel parameters: {0}")]
    InvalidChannel(String),

    #[error("reference channel is all zero")]
    ZeroChannel,

    #[error("negative value where a nonnegative one is required: {0}")]
    Negative(&'static str),

    #[error("invalid solver configuration: {0}")]
    InvalidSolver(String),

    #[error("Gram matrix is singular or ill-conditioned (condition estimate {0:.3e})")]
    SingularGram(f64),

    #[error("invalid method specification: {0}")]
    InvalidMethod(String),

    #[error("dataset: bad magic bytes {0:?}")]
    BadMagic([u8; 4]),

    #[error("dataset: unsupported version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("dataset: truncated payload")]
    Truncated,

    #[error("dataset: {0} unexpected trailing bytes")]
    TrailingData(usize),

    #[error("dataset header does not describe a valid configuration: {0}")]
    BadHeader(String),

    #[error("report: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
