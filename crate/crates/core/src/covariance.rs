//! Per-time empirical covariance estimators feeding the solver, plus the
//! first-difference preprocessing used when series carry trends.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{MatrixKind, SymmetricMatrixSequence, TimeSeries};

/// Smoothing kernel shapes for [`kernel_covariance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `K(u) = 1` for `u <= 1`, else 0.
    Boxcar,
    /// `K(u) = exp(-u^2 / 2)`.
    Gaussian,
}

impl Kernel {
    fn weight(self, u: f64) -> f64 {
        match self {
            Kernel::Boxcar => {
                if u <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => (-0.5 * u * u).exp(),
        }
    }
}

/// Instantaneous covariance estimate `S_t = y_t y_t' / 2`: one rank-one
/// matrix per observation, no smoothing across time.
pub fn dirac_covariance(ts: &TimeSeries) -> SymmetricMatrixSequence {
    let mats: Vec<DMatrix<f64>> = (0..ts.len())
        .map(|t| {
            let y = ts.observation(t);
            &y * y.transpose() * 0.5
        })
        .collect();
    SymmetricMatrixSequence::new(mats, MatrixKind::Covariance)
        .expect("scaled outer products are symmetric positive semi-definite")
}

/// Kernel-weighted covariance estimate
/// `S_t = sum_s w_st y_s y_s' / sum_s w_st` with `w_st = K(|s - t| / width)`.
///
/// Unlike [`dirac_covariance`] this follows the normalized weighted-mean
/// convention without the extra 1/2 factor; with a boxcar of width below one
/// sample it reduces to `y_t y_t'`.
pub fn kernel_covariance(
    ts: &TimeSeries,
    kernel: Kernel,
    width: f64,
) -> Result<SymmetricMatrixSequence> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kernel width must be finite and > 0, got {width}"
        )));
    }
    let t_len = ts.len();
    let p = ts.dim();
    let outers: Vec<DMatrix<f64>> = (0..t_len)
        .map(|s| {
            let y = ts.observation(s);
            &y * y.transpose()
        })
        .collect();

    let mut mats = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut acc = DMatrix::<f64>::zeros(p, p);
        let mut total = 0.0;
        for (s, outer) in outers.iter().enumerate() {
            let u = (s as f64 - t as f64).abs() / width;
            let w = kernel.weight(u);
            if w > 0.0 {
                acc += outer * w;
                total += w;
            }
        }
        if total == 0.0 {
            return Err(Error::Domain(format!(
                "degenerate kernel: all weights vanish at time {t}"
            )));
        }
        mats.push(acc / total);
    }
    SymmetricMatrixSequence::new(mats, MatrixKind::Covariance)
}

/// First differences `e_t = y_t - y_{t-1}`, length `T - 1`; used to model
/// innovations when the raw series is integrated.  Requires `T >= 3` so the
/// result is still a valid series.
pub fn difference_series(ts: &TimeSeries) -> Result<TimeSeries> {
    if ts.len() < 3 {
        return Err(Error::Dimension(format!(
            "difference preprocessing needs at least 3 observations, got {}",
            ts.len()
        )));
    }
    let data = ts.data();
    let mut out = DMatrix::zeros(ts.len() - 1, ts.dim());
    for t in 1..ts.len() {
        for j in 0..ts.dim() {
            out[(t - 1, j)] = data[(t, j)] - data[(t - 1, j)];
        }
    }
    TimeSeries::new(out)
}
