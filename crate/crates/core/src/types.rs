//! Shared data types: time series, symmetric matrix sequences, solver
//! hyperparameters and the vectorized (upper-triangle) problem form.
//!
//! Conventions used across the crate:
//! * time indices are 1-based in reported quantities (a changepoint at `t`
//!   means the model for time `t` differs from `t - 1`, with `t` in `2..=T`),
//!   while in-memory sequences are ordinary 0-based vectors;
//! * edges are pairs `(i, j)` with `j > i` (0-based variable indices) in
//!   row-major order, which fixes the column layout of every vectorized
//!   matrix in the crate.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};

/// Relative tolerance below which a matrix counts as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Smallest admissible eigenvalue for a covariance-kind matrix; tiny negative
/// values are tolerated as eigendecomposition noise.
pub const COVARIANCE_EIG_FLOOR: f64 = -1e-10;

/// An undirected edge `(i, j)` with `j > i`, 0-based.
pub type Edge = (usize, usize);

/// Number of off-diagonal edge slots for `p` variables: `p (p - 1) / 2`.
pub fn edge_count(p: usize) -> usize {
    p * (p - 1) / 2
}

/// Position of edge `(i, j)` in the canonical row-major upper-triangle order
/// `(0,1), (0,2), .., (0,p-1), (1,2), ..`.
pub fn edge_index(i: usize, j: usize, p: usize) -> usize {
    debug_assert!(i < j && j < p, "edge ({i}, {j}) out of range for p = {p}");
    i * p - i * (i + 1) / 2 + (j - i - 1)
}

/// All edges of a `p`-variable graph in canonical order.
pub fn edges(p: usize) -> Vec<Edge> {
    let mut out = Vec::with_capacity(edge_count(p));
    for i in 0..p {
        for j in (i + 1)..p {
            out.push((i, j));
        }
    }
    out
}

fn entries_symmetric(a: f64, b: f64) -> bool {
    (a - b).abs() <= SYMMETRY_TOL * f64::max(1.0, f64::max(a.abs(), b.abs()))
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "{what}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if !entries_symmetric(m[(i, j)], m[(j, i)]) {
                return Err(Error::Symmetry(format!(
                    "{what}: entries ({i},{j}) = {} and ({j},{i}) = {} disagree",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// A multivariate series laid out as a `T x P` matrix, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    data: DMatrix<f64>,
}

impl TimeSeries {
    /// Wraps a `T x P` matrix; requires `T >= 2`, `P >= 2` and finite entries.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 || data.ncols() < 2 {
            return Err(Error::Dimension(format!(
                "time series must be at least 2x2, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(
                "time series contains non-finite entries".into(),
            ));
        }
        Ok(Self { data })
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // T >= 2 by construction
    }

    /// Number of variables `P`.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Observation at 0-based time index `t` as a column vector.
    pub fn observation(&self, t: usize) -> DVector<f64> {
        self.data.row(t).transpose()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }
}

/// Role tag for a [`SymmetricMatrixSequence`]; definiteness checks depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// Empirical covariance estimates: positive semi-definite.
    Covariance,
    /// Precision (inverse covariance) iterates: positive definite.
    Precision,
    /// Auxiliary consensus variables: symmetry only.
    Auxiliary,
    /// Scaled dual variables: symmetry only.
    Dual,
}

/// One symmetric `P x P` matrix per time step, with a role tag.
#[derive(Debug, Clone)]
pub struct SymmetricMatrixSequence {
    mats: Vec<DMatrix<f64>>,
    kind: MatrixKind,
}

impl SymmetricMatrixSequence {
    /// Validates symmetry of every matrix (within [`SYMMETRY_TOL`] relative),
    /// equal dimensions across time, and the definiteness implied by `kind`:
    /// covariance matrices may not have eigenvalues below
    /// [`COVARIANCE_EIG_FLOOR`], precision matrices must be positive definite.
    pub fn new(mats: Vec<DMatrix<f64>>, kind: MatrixKind) -> Result<Self> {
        if mats.is_empty() {
            return Err(Error::Dimension("matrix sequence is empty".into()));
        }
        let p = mats[0].nrows();
        for (t, m) in mats.iter().enumerate() {
            check_symmetric(m, &format!("sequence entry {t}"))?;
            if m.nrows() != p {
                return Err(Error::Dimension(format!(
                    "sequence entry {t} is {}x{} but entry 0 is {p}x{p}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            match kind {
                MatrixKind::Covariance => {
                    let min_eig = symmetric_min_eigenvalue(m);
                    if min_eig < COVARIANCE_EIG_FLOOR {
                        return Err(Error::Domain(format!(
                            "covariance entry {t} has eigenvalue {min_eig}"
                        )));
                    }
                }
                MatrixKind::Precision => {
                    let min_eig = symmetric_min_eigenvalue(m);
                    if min_eig <= 0.0 {
                        return Err(Error::Domain(format!(
                            "precision entry {t} is not positive definite (eigenvalue {min_eig})"
                        )));
                    }
                }
                MatrixKind::Auxiliary | MatrixKind::Dual => {}
            }
        }
        Ok(Self { mats, kind })
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    /// Matrix dimension `P`.
    pub fn dim(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn get(&self, t: usize) -> &DMatrix<f64> {
        &self.mats[t]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DMatrix<f64>> {
        self.mats.iter()
    }

    pub fn as_slice(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    pub fn into_inner(self) -> Vec<DMatrix<f64>> {
        self.mats
    }
}

fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Which fused penalty couples consecutive precision matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Group fusion: Frobenius norm of each off-diagonal difference, so a
    /// changepoint is shared by every edge at once.
    Gfgl,
    /// Independent fusion: elementwise l1 of differences, so edges change on
    /// their own schedules.
    Ifgl,
}

/// Penalties and ADMM controls for one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    /// Sparsity weight on off-diagonal precision entries (`>= 0`).
    pub lambda1: f64,
    /// Smoothness weight on consecutive differences (`>= 0`).
    pub lambda2: f64,
    /// ADMM step parameter (`> 0`).
    pub gamma: f64,
    /// Primal residual tolerance (`> 0`).
    pub eps_prime: f64,
    /// Dual residual tolerance (`> 0`).
    pub eps_dual: f64,
    /// Outer ADMM iteration cap (`>= 1`).
    pub max_iter: usize,
    pub method: Method,
    /// Extra factor applied to the smoothing weight inside the vectorized
    /// constraint update (`lambda2_bar = lambda2_scale * lambda2 / gamma`).
    /// The default 1 keeps the literal `lambda / gamma` rescaling.  Because
    /// the constraint step works on upper-triangle vectors while the matrix
    /// objective sums both triangles, a group-fusion fit matches the
    /// full-matrix cost exactly when this is set to `1/sqrt(2)`; the l1
    /// penalties need no adjustment (the halving cancels there).
    pub lambda2_scale: f64,
}

impl Hyperparameters {
    /// Builds parameters with the standard defaults: `gamma = 10`,
    /// `eps_prime = eps_dual = 1e-3`, `max_iter = 500`.
    pub fn new(lambda1: f64, lambda2: f64, method: Method) -> Self {
        Self {
            lambda1,
            lambda2,
            gamma: 10.0,
            eps_prime: 1e-3,
            eps_dual: 1e-3,
            max_iter: 500,
            method,
            lambda2_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda1 must be finite and >= 0, got {}",
                self.lambda1
            )));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda2 must be finite and >= 0, got {}",
                self.lambda2
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be finite and > 0, got {}",
                self.gamma
            )));
        }
        if !(self.eps_prime > 0.0 && self.eps_dual > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "residual tolerances must be > 0, got {} / {}",
                self.eps_prime, self.eps_dual
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        if !(self.lambda2_scale > 0.0 && self.lambda2_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda2_scale must be finite and > 0, got {}",
                self.lambda2_scale
            )));
        }
        Ok(())
    }
}

/// Extracts the strict upper triangle of a symmetric matrix in canonical edge
/// order.  Fails if the matrix is asymmetric beyond [`SYMMETRY_TOL`].
pub fn vectorize_upper(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_symmetric(m, "vectorize_upper input")?;
    let p = m.nrows();
    let mut v = DVector::zeros(edge_count(p));
    let mut k = 0;
    for i in 0..p {
        for j in (i + 1)..p {
            v[k] = m[(i, j)];
            k += 1;
        }
    }
    Ok(v)
}

/// Rebuilds a symmetric matrix from its strict upper triangle `v` (canonical
/// order) and a diagonal.  Fails when `v.len()` does not match the number of
/// edges implied by `diag.len()`.
pub fn devectorize(v: &DVector<f64>, diag: &DVector<f64>) -> Result<DMatrix<f64>> {
    let p = diag.len();
    if v.len() != edge_count(p) {
        return Err(Error::Dimension(format!(
            "off-diagonal vector has length {} but {} variables need {}",
            v.len(),
            p,
            edge_count(p)
        )));
    }
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p {
        m[(i, i)] = diag[i];
    }
    let mut k = 0;
    for i in 0..p {
        for j in (i + 1)..p {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    Ok(m)
}

/// The estimation cost: negative log-likelihood terms plus the off-diagonal
/// l1 penalty and the method-dependent fused penalty,
///
/// `sum_t [-log det X_t + tr(S_t X_t)] + lambda1 * sum_t |offdiag(X_t)|_1
///  + lambda2 * sum_{t>=2} |offdiag(X_t - X_{t-1})|`,
///
/// where the difference norm is Frobenius for group fusion and l1 for
/// independent fusion, both over all off-diagonal entries.
pub fn gfgl_objective(
    x: &SymmetricMatrixSequence,
    s: &SymmetricMatrixSequence,
    h: &Hyperparameters,
) -> Result<f64> {
    h.validate()?;
    if x.kind() != MatrixKind::Precision {
        return Err(Error::InvalidParameter(
            "gfgl_objective expects a precision-kind first argument".into(),
        ));
    }
    if s.kind() != MatrixKind::Covariance {
        return Err(Error::InvalidParameter(
            "gfgl_objective expects a covariance-kind second argument".into(),
        ));
    }
    objective_of(x.as_slice(), s.as_slice(), h)
}

/// Objective evaluation on raw slices; used internally by the solver where
/// the sequences are maintained as plain vectors.
pub(crate) fn objective_of(
    x: &[DMatrix<f64>],
    s: &[DMatrix<f64>],
    h: &Hyperparameters,
) -> Result<f64> {
    if x.len() != s.len() || x.is_empty() {
        return Err(Error::Dimension(format!(
            "precision sequence has {} entries but covariance has {}",
            x.len(),
            s.len()
        )));
    }
    let p = x[0].nrows();
    let mut total = 0.0;
    for (t, (xt, st)) in x.iter().zip(s.iter()).enumerate() {
        if xt.nrows() != p || st.nrows() != p || !st.is_square() {
            return Err(Error::Dimension(format!(
                "objective entry {t} has inconsistent dimensions"
            )));
        }
        let chol = xt.clone().cholesky().ok_or_else(|| {
            Error::Domain(format!("precision entry {t} is not positive definite"))
        })?;
        let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let trace: f64 = st.iter().zip(xt.iter()).map(|(a, b)| a * b).sum();
        total += trace - log_det;
        let mut l1 = 0.0;
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    l1 += xt[(i, j)].abs();
                }
            }
        }
        total += h.lambda1 * l1;
    }
    for t in 1..x.len() {
        let mut sq = 0.0;
        let mut abs = 0.0;
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    let d = x[t][(i, j)] - x[t - 1][(i, j)];
                    sq += d * d;
                    abs += d.abs();
                }
            }
        }
        total += h.lambda2
            * match h.method {
                Method::Gfgl => sq.sqrt(),
                Method::Ifgl => abs,
            };
    }
    Ok(total)
}

/// Vectorized form of a matrix-sequence problem: the stacked off-diagonal
/// target `A`, the first-difference operator `D`, its cumulative-sum inverse
/// `R`, and the jump decomposition `(omega_level, omega_jumps)` with
/// `row_t(Z) = omega_level + sum_{i < t} omega_jumps_i`.
#[derive(Debug, Clone)]
pub struct VectorizedProblem {
    /// `T x Q` stacked upper-triangle rows.
    pub a: DMatrix<f64>,
    /// `(T-1) x T` forward-difference operator, `D[i, i] = -1, D[i, i+1] = 1`.
    pub d: DMatrix<f64>,
    /// `T x (T-1)` cumulative-sum operator, `R[i, j] = 1` for `i > j`.
    pub r: DMatrix<f64>,
    /// `(T-1) x Q` jump rows; zero rows mean "no change at that step".
    pub omega_jumps: DMatrix<f64>,
    /// `1 x Q` base level of the reconstruction.
    pub omega_level: RowDVector<f64>,
}

impl VectorizedProblem {
    /// Builds the operators for a `T x Q` target with zero jump decomposition.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let t = a.nrows();
        if t == 0 {
            return Err(Error::Dimension("vectorized target has no rows".into()));
        }
        let q = a.ncols();
        Ok(Self {
            d: Self::difference_matrix(t),
            r: Self::cumsum_matrix(t),
            omega_jumps: DMatrix::zeros(t.saturating_sub(1), q),
            omega_level: RowDVector::zeros(q),
            a,
        })
    }

    /// Vectorizes a sequence of symmetric matrices into rows of `A`.
    pub fn from_sequence(seq: &[DMatrix<f64>]) -> Result<Self> {
        if seq.is_empty() {
            return Err(Error::Dimension("matrix sequence is empty".into()));
        }
        let p = seq[0].nrows();
        let mut a = DMatrix::zeros(seq.len(), edge_count(p));
        for (t, m) in seq.iter().enumerate() {
            let v = vectorize_upper(m)?;
            a.row_mut(t).copy_from(&v.transpose());
        }
        Self::new(a)
    }

    /// `(T-1) x T` forward-difference operator.
    pub fn difference_matrix(t: usize) -> DMatrix<f64> {
        let rows = t.saturating_sub(1);
        let mut d = DMatrix::zeros(rows, t);
        for i in 0..rows {
            d[(i, i)] = -1.0;
            d[(i, i + 1)] = 1.0;
        }
        d
    }

    /// `T x (T-1)` lower-triangular cumulative-sum operator (ones below the
    /// diagonal), the right inverse of the difference structure.
    pub fn cumsum_matrix(t: usize) -> DMatrix<f64> {
        let cols = t.saturating_sub(1);
        let mut r = DMatrix::zeros(t, cols);
        for i in 0..t {
            for j in 0..cols {
                if i > j {
                    r[(i, j)] = 1.0;
                }
            }
        }
        r
    }

    /// Rebuilds the `T x Q` matrix encoded by the jump decomposition.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let t = self.a.nrows();
        let q = self.a.ncols();
        let mut z = DMatrix::zeros(t, q);
        z.row_mut(0).copy_from(&self.omega_level);
        for i in 1..t {
            let prev = z.row(i - 1).clone_owned();
            z.row_mut(i).copy_from(&(prev + self.omega_jumps.row(i - 1)));
        }
        z
    }
}
