use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid grid, lattice, filter or run parameters.
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument outside the domain of the operation (e.g. a nonpositive λ).
    #[error("domain error: {0}")]
    Domain(String),
    /// A dilation scale the grid cannot resolve.
    #[error("scale {scale} is not resolvable: {reason}")]
    ScaleRange { scale: i32, reason: String },
    /// Kernel evaluated on the diagonal.
    #[error("kernel evaluated on the diagonal at x = y = {0}")]
    Singularity(f64),
    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Two independent numerical routes disagree beyond tolerance.
    #[error("numerical integrity check failed: {0}")]
    NumericalIntegrity(String),
    /// A filter bank failed its construction invariants.
    #[error("filter construction failed: {0}")]
    Construction(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
