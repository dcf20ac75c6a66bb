use std::path::PathBuf;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("coefficient field must be strictly positive (entry {index} = {value})")]
    NonPositiveCoefficient { index: usize, value: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("conjugate gradient did not reach tolerance {tol:e} in {iterations} iterations (residual {residual:e})")]
    IterationCap { iterations: usize, residual: f64, tol: f64 },

    #[error("Picard iteration did not converge at time step {step} after {iterations} iterations (change {change:e})")]
    PicardDiverged { step: usize, iterations: usize, change: f64 },

    #[error("nonlinear coefficient overflow at time step {step}: gamma * u = {value:.3} exceeds 30")]
    Overflow { step: usize, value: f64 },

    #[error("local mass matrix on coarse element {element} is not positive definite")]
    BadKappaTilde { element: usize },

    #[error("constraint system for coarse element {element} is singular")]
    SingularKkt { element: usize },

    #[error("Gram matrix of the multiscale basis is singular")]
    SingularGram,

    #[error("non-finite value detected: {0}")]
    NonFinite(String),

    #[error("sample {index} failed: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Config(String),

    #[error("not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for errors caused by the caller's configuration rather than by the numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::NotFound(_) | Error::Json { .. } => true,
            Error::Shape(_) => true,
            Error::Sample { source, .. } | Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
