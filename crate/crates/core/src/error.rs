use thiserror::Error;

/// Errors raised by the library and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid stride: eta = {eta} must be >= 1 and divide atom size n = {n}")]
    InvalidStride { n: usize, eta: usize },

    #[error("atom too large: n = {n} must be smaller than min(rows, cols) = {min_dim}")]
    AtomTooLarge { n: usize, min_dim: usize },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("step size too large: tau*rho = {tau_rho} exceeds convexity bound {bound}")]
    StepsizeTooLarge { tau_rho: f64, bound: f64 },

    #[error("solver diverged: non-finite iterate at iteration {iteration}")]
    NonfiniteIterate { iteration: usize },

    #[error("task requires a pixel mask")]
    MissingMask,

    #[error("task requires a blur kernel")]
    MissingKernel,

    #[error("variant {variant} is not supported for task {task}")]
    IncompatibleVariant { task: String, variant: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("png decode error: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encode error: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
