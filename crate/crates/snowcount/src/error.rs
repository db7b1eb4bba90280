//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced by geometry construction, certification and solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configured vertex, cube or memory budget would be exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// A certified quantity could not be established at the requested accuracy.
    #[error("certification failed: {0}")]
    Certification(String),
    /// A measure-zero degenerate configuration was hit and is reported instead of perturbed.
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// An iterative method stopped before reaching its tolerance.
    #[error("no convergence in {what}: achieved {achieved:.3e}, required {required:.3e}")]
    NonConvergence {
        /// Name of the iteration.
        what: String,
        /// Best residual or tolerance reached.
        achieved: f64,
        /// Requested tolerance.
        required: f64,
    },
    /// The requested configuration is not implemented.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// I/O failure while exporting.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// JSON serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    /// CSV serialization failure.
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Resource(_) => "resource",
            Error::Precondition(_) => "precondition",
            Error::Certification(_) => "certification",
            Error::Degenerate(_) => "degenerate",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Unsupported(_) => "unsupported",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
