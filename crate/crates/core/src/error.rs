use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("decomposition error: {0}")]
    Decomposition(String),

    #[error("non-manifold topology: {0}")]
    NonManifold(String),

    #[error("non-matching interface: {0}")]
    NonMatching(String),

    #[error("singular geometry: |det J| = {det:e} at {point:?}")]
    SingularGeometry { det: f64, point: Vec<f64> },

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("operator is not positive definite: {0}")]
    Definiteness(String),

    #[error("no convergence after {iterations} iterations (relative residual {relative_residual:e})")]
    Divergence {
        iterations: usize,
        relative_residual: f64,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("replica consistency violated: {0}")]
    Consistency(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with a description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error behind any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::SizeMismatch { expected, actual });
    }
    Ok(())
}
