use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(String),

    #[error("singular system in {0}")]
    SingularSystem(String),

    #[error("component {component} is degenerate (effective size {weight:.3e})")]
    DegenerateComponent { component: usize, weight: f64 },

    #[error("all component densities underflow for observation {observation}")]
    Underflow { observation: usize },

    #[error("start {start}: {source}")]
    Start {
        start: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no grid cell produced a converged fit ({failed} failed, {total} cells)")]
    NoConvergedFits { failed: usize, total: usize },
}

impl Error {
    /// Strips restart tagging to expose the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::Start { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::NotPositiveDefinite(_)
                | Error::SingularSystem(_)
                | Error::DegenerateComponent { .. }
                | Error::Underflow { .. }
                | Error::NoConvergedFits { .. }
        )
    }
}
