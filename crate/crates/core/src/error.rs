use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point lies outside the kernel domain: distance {distance} >= radius {radius}")]
    Domain { distance: f64, radius: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid derivative data: {0}")]
    InvalidData(String),

    #[error("singular model: kernel coefficient for {0} is zero and the observation is noiseless")]
    SingularModel(String),

    #[error("ill-conditioned linear system: {0}")]
    IllConditioned(String),

    #[error("Cholesky factorisation failed: {0}")]
    CholeskyFailure(String),

    #[error("series does not converge within {terms} terms")]
    Diverges { terms: usize },

    #[error("degenerate data: every residual derivative vanishes")]
    DegenerateData,

    #[error("unstable estimate: {0}")]
    Unstable(String),

    #[error("fixed-point iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Attaches the step index of a recursive algorithm.
    pub fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// The innermost error, with step context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
