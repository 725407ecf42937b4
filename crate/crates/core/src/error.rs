//! Crate-wide error type.

use nalgebra::DMatrix;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by estimation, simulation and evaluation routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A matrix violated a shape requirement (wrong size, mismatched lengths).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A matrix that must be symmetric was asymmetric beyond tolerance.
    #[error("symmetry error: {0}")]
    Symmetry(String),

    /// A numeric-domain violation: non-finite inputs, loss of positive
    /// definiteness, or a degenerate kernel weight sum.
    #[error("domain error: {0}")]
    Domain(String),

    /// A scalar parameter was outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An inner iterative routine hit its iteration cap before meeting its
    /// tolerance.  The last iterate is kept for diagnosis.
    #[error("{op} did not converge within {max_iter} iterations")]
    ProxDidNotConverge {
        op: &'static str,
        max_iter: usize,
        last: Box<DMatrix<f64>>,
    },

    /// An oracle routine was asked for a problem larger than the sizes it is
    /// certified for.
    #[error("oracle size guard: {0}")]
    OracleSizeGuard(String),

    /// Every candidate fit in a model search failed.
    #[error("model search failed: {0}")]
    SearchFailed(String),
}
