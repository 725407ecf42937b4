//! Joint estimation of piecewise-constant Gaussian graphical models and
//! changepoints from multivariate time series.
//!
//! The estimator minimizes a time-indexed graphical-lasso cost with a fused
//! penalty on consecutive precision matrices: a group (Frobenius) fusion that
//! encourages changepoints shared across edges, or an elementwise l1 fusion
//! that lets each edge change independently.  Solving is done by ADMM with an
//! eigendecomposition-based likelihood step and a proximal constraint step.

pub mod covariance;
pub mod error;
pub mod evaluate;
pub mod oracle;
pub mod prox;
pub mod simulate;
pub mod solver;
pub mod types;

pub use error::{Error, Result};
