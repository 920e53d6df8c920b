use thiserror::Error;

/// Errors shared across the model crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel not admissible as {role}: {detail}")]
    KernelValidation { role: String, detail: String },

    #[error("derivative requested at a support boundary (d = {d})")]
    SupportBoundary { d: f64 },

    #[error("production map is not monotone between grid nodes {left} and {right}")]
    NonMonotoneMap { left: usize, right: usize },

    #[error("no feasible community length: {0}")]
    Infeasible(String),

    #[error("internal consistency check failed: {0}")]
    Integrity(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
