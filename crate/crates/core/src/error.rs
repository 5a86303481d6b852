use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The evaluation point lies on the support (or an atom) of a measure.
    #[error("domain error: {0}")]
    Domain(String),

    /// A reciprocal transform hit a zero of the Cauchy transform.
    #[error("pole: {0}")]
    Pole(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last step {residual:.3e}) at z = {z}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        z: String,
    },

    #[error("boundary extension failed at x = {x}: {detail}")]
    BoundaryExtension { x: f64, detail: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the subordination or root-finding machinery.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Pole(_)
                | Error::NonConvergence { .. }
                | Error::BoundaryExtension { .. }
        )
    }
}
