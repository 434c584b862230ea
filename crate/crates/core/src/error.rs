use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid kernel specification: {0}")]
    InvalidKernel(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("kernel singularity: points coincide at {0:?}")]
    Singularity([f64; 2]),

    #[error("point {point:?} is not admissible: {reason}")]
    OutsideDomain { point: [f64; 2], reason: String },

    #[error("non-integrable configuration: {0}")]
    NonIntegrable(String),

    #[error("quadrature failure on element pair ({0}, {1}): {2}")]
    Quadrature(usize, usize, String),

    #[error("incompatible data: integral of f is {residual:e} (tolerance {tolerance:e})")]
    IncompatibleData { residual: f64, tolerance: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("insufficient scales: need at least {needed}, got {got}")]
    InsufficientScales { needed: usize, got: usize },

    #[error("mesh too coarse: {0}")]
    MeshTooCoarse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("subsolution search failed: no amplitude up to {0:e} satisfies the bound")]
    SearchFailed(f64),

    #[error("unknown expression `{0}`")]
    UnknownExpression(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
