//! Slow reference optimizers used by the test suites to certify the fast
//! solvers.  Nothing in the estimation path depends on this module.
//!
//! Every routine here is deterministic, prefers transparency over speed, and
//! refuses problem sizes beyond what brute force can certify.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::Method;

/// Largest variable count accepted by [`subgradient_minimize`].
pub const MAX_ORACLE_P: usize = 4;
/// Largest time horizon accepted by [`subgradient_minimize`].
pub const MAX_ORACLE_T: usize = 8;
/// Largest vector length accepted by [`tv_enumerate`].
pub const MAX_TV_ENUM_LEN: usize = 12;

/// Eigenvalue floor used when projecting iterates back to the positive
/// definite cone.
const PD_FLOOR: f64 = 1e-6;

/// Objective selector for [`subgradient_minimize`].
///
/// The vectorized forms operate on a `T x Q` matrix `Z` with the forward
/// difference `(DZ)_t = row_{t+1}(Z) - row_t(Z)`.
pub enum OracleObjective<'a> {
    /// The full estimation cost over a sequence of precision matrices:
    /// `sum_t [-log det X_t + tr(S_t X_t)] + lambda1 |offdiag|_1 + fused`.
    GfglFull {
        s: &'a [DMatrix<f64>],
        lambda1: f64,
        lambda2: f64,
        method: Method,
    },
    /// `1/2 |Z - A|_F^2 + lambda1 |Z|_1 + lambda2 sum_t |(DZ)_t|_2`.
    Gflsa {
        a: &'a DMatrix<f64>,
        lambda1: f64,
        lambda2: f64,
    },
    /// `1/2 |Z - A|_F^2 + lambda1 |Z|_1 + lambda2 |DZ|_1`.
    Flsa {
        a: &'a DMatrix<f64>,
        lambda1: f64,
        lambda2: f64,
    },
}

/// Step-size schedule for the subgradient iteration.
#[derive(Debug, Clone, Copy)]
pub enum StepRule {
    /// `alpha_n = initial / sqrt(n + 1)`; safe default for general convex
    /// objectives.
    Diminishing { initial: f64 },
    /// `alpha_n = initial / (n + 1)`; the classical schedule for strongly
    /// convex objectives (`initial = 2 / mu`), with an O(1/n) best-iterate
    /// rate.  The proximal targets here have unit strong convexity, so
    /// `initial = 2` is the right scale for them.
    Harmonic { initial: f64 },
}

impl StepRule {
    fn step(&self, n: usize) -> f64 {
        match *self {
            StepRule::Diminishing { initial } => initial / ((n + 1) as f64).sqrt(),
            StepRule::Harmonic { initial } => initial / (n + 1) as f64,
        }
    }
}

/// Best iterate found by [`subgradient_minimize`] and its objective value.
/// For the full objective the minimizer holds one matrix per time step; for
/// the vectorized objectives it holds a single stacked matrix.
pub struct OracleSolution {
    pub minimizer: Vec<DMatrix<f64>>,
    pub objective: f64,
}

/// Projected subgradient descent with best-iterate tracking.
///
/// Initialization is deterministic: identity matrices for the full objective
/// (kept positive definite by an eigenvalue-floor projection after every
/// step), and `Z = A` for the vectorized objectives.  The returned objective
/// is the smallest value seen along the trajectory.
pub fn subgradient_minimize(
    objective: &OracleObjective<'_>,
    steps: usize,
    rule: StepRule,
) -> Result<OracleSolution> {
    match objective {
        OracleObjective::GfglFull { s, lambda1, lambda2, method } => {
            minimize_full(s, *lambda1, *lambda2, *method, steps, rule)
        }
        OracleObjective::Gflsa { a, lambda1, lambda2 } => {
            minimize_stacked(a, *lambda1, *lambda2, true, steps, rule)
        }
        OracleObjective::Flsa { a, lambda1, lambda2 } => {
            minimize_stacked(a, *lambda1, *lambda2, false, steps, rule)
        }
    }
}

fn check_lambdas(lambda1: f64, lambda2: f64) -> Result<()> {
    if lambda1 < 0.0 || lambda2 < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "oracle penalties must be >= 0, got {lambda1} / {lambda2}"
        )));
    }
    Ok(())
}

fn minimize_full(
    s: &[DMatrix<f64>],
    lambda1: f64,
    lambda2: f64,
    method: Method,
    steps: usize,
    rule: StepRule,
) -> Result<OracleSolution> {
    check_lambdas(lambda1, lambda2)?;
    let t = s.len();
    if t == 0 {
        return Err(Error::Dimension("oracle needs at least one time step".into()));
    }
    let p = s[0].nrows();
    if p > MAX_ORACLE_P || t > MAX_ORACLE_T {
        return Err(Error::OracleSizeGuard(format!(
            "full objective certified only up to P = {MAX_ORACLE_P}, T = {MAX_ORACLE_T}; got P = {p}, T = {t}"
        )));
    }

    let mut x: Vec<DMatrix<f64>> = vec![DMatrix::identity(p, p); t];
    let mut best = full_objective(&x, s, lambda1, lambda2, method);
    let mut best_x = x.clone();

    for n in 0..steps {
        let g = full_subgradient(&x, s, lambda1, lambda2, method);
        let alpha = rule.step(n);
        for (xt, gt) in x.iter_mut().zip(&g) {
            *xt -= gt * alpha;
            project_pd(xt);
        }
        let f = full_objective(&x, s, lambda1, lambda2, method);
        if f < best {
            best = f;
            best_x = x.clone();
        }
    }
    Ok(OracleSolution { minimizer: best_x, objective: best })
}

/// Symmetrize and clamp eigenvalues at [`PD_FLOOR`].
fn project_pd(m: &mut DMatrix<f64>) {
    let sym = (&*m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let vals = eig.eigenvalues.map(|e| e.max(PD_FLOOR));
    let recomposed =
        &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    *m = (&recomposed + recomposed.transpose()) * 0.5;
}

fn full_objective(
    x: &[DMatrix<f64>],
    s: &[DMatrix<f64>],
    lambda1: f64,
    lambda2: f64,
    method: Method,
) -> f64 {
    let p = x[0].nrows();
    let mut total = 0.0;
    for (xt, st) in x.iter().zip(s) {
        let eig = xt.clone().symmetric_eigen();
        let log_det: f64 = eig.eigenvalues.iter().map(|e| e.ln()).sum();
        let mut trace = 0.0;
        for i in 0..p {
            for j in 0..p {
                trace += st[(i, j)] * xt[(j, i)];
            }
        }
        total += trace - log_det;
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    total += lambda1 * xt[(i, j)].abs();
                }
            }
        }
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
        total += lambda2
            * match method {
                Method::Gfgl => sq.sqrt(),
                Method::Ifgl => abs,
            };
    }
    total
}

fn full_subgradient(
    x: &[DMatrix<f64>],
    s: &[DMatrix<f64>],
    lambda1: f64,
    lambda2: f64,
    method: Method,
) -> Vec<DMatrix<f64>> {
    let p = x[0].nrows();
    let mut g: Vec<DMatrix<f64>> = Vec::with_capacity(x.len());
    for (xt, st) in x.iter().zip(s) {
        let inv = xt
            .clone()
            .cholesky()
            .expect("projected iterate must stay positive definite")
            .inverse();
        let mut gt = st - inv;
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    gt[(i, j)] += lambda1 * sign(xt[(i, j)]);
                }
            }
        }
        g.push(gt);
    }
    for t in 1..x.len() {
        let mut diff = &x[t] - &x[t - 1];
        for i in 0..p {
            diff[(i, i)] = 0.0;
        }
        match method {
            Method::Gfgl => {
                let norm = diff.norm();
                if norm > 0.0 {
                    let u = diff * (lambda2 / norm);
                    g[t] += &u;
                    g[t - 1] -= &u;
                }
            }
            Method::Ifgl => {
                let u = diff.map(|d| lambda2 * sign(d));
                g[t] += &u;
                g[t - 1] -= &u;
            }
        }
    }
    g
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn minimize_stacked(
    a: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
    grouped: bool,
    steps: usize,
    rule: StepRule,
) -> Result<OracleSolution> {
    check_lambdas(lambda1, lambda2)?;
    let (t, q) = (a.nrows(), a.ncols());
    if t == 0 {
        return Err(Error::Dimension("oracle needs at least one row".into()));
    }
    let q_max = MAX_ORACLE_P * (MAX_ORACLE_P - 1) / 2;
    if t > MAX_ORACLE_T || q > q_max {
        return Err(Error::OracleSizeGuard(format!(
            "stacked objective certified only up to {MAX_ORACLE_T} x {q_max}; got {t} x {q}"
        )));
    }

    let mut z = a.clone();
    let mut best = stacked_objective(&z, a, lambda1, lambda2, grouped);
    let mut best_z = z.clone();
    for n in 0..steps {
        let g = stacked_subgradient(&z, a, lambda1, lambda2, grouped);
        z -= g * rule.step(n);
        let f = stacked_objective(&z, a, lambda1, lambda2, grouped);
        if f < best {
            best = f;
            best_z = z.clone();
        }
    }
    Ok(OracleSolution { minimizer: vec![best_z], objective: best })
}

fn stacked_objective(
    z: &DMatrix<f64>,
    a: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
    grouped: bool,
) -> f64 {
    let mut total = 0.5 * (z - a).norm_squared() + lambda1 * z.iter().map(|x| x.abs()).sum::<f64>();
    for i in 1..z.nrows() {
        let d = z.row(i) - z.row(i - 1);
        total += lambda2
            * if grouped {
                d.norm()
            } else {
                d.iter().map(|x| x.abs()).sum::<f64>()
            };
    }
    total
}

fn stacked_subgradient(
    z: &DMatrix<f64>,
    a: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
    grouped: bool,
) -> DMatrix<f64> {
    let mut g = z - a;
    g.zip_apply(z, |gi, zi| *gi += lambda1 * sign(zi));
    for i in 1..z.nrows() {
        let d = z.row(i) - z.row(i - 1);
        let u = if grouped {
            let norm = d.norm();
            if norm > 0.0 {
                d * (lambda2 / norm)
            } else {
                continue;
            }
        } else {
            d.map(|x| lambda2 * sign(x))
        };
        for c in 0..z.ncols() {
            g[(i, c)] += u[c];
            g[(i - 1, c)] -= u[c];
        }
    }
    g
}

/// Exact 1-D fused minimizer `argmin 1/2 |z - v|^2 + lam * sum |z_{i+1} - z_i|`
/// by exhaustive enumeration over segmentations.
///
/// Each of the `T - 1` adjacent positions is assigned one of three states:
/// fused (difference pinned to zero) or a jump with a fixed sign.  For a given
/// assignment the restricted problem is a smooth quadratic whose per-segment
/// stationary values are `mean(v over segment) + lam * (eps_right - eps_left)
/// / len(segment)`; the true minimizer realizes its own assignment, so
/// evaluating the genuine objective at every candidate and keeping the best
/// is exact, no consistency check needed.
pub fn tv_enumerate(v: &[f64], lam: f64) -> Result<Vec<f64>> {
    if lam < 0.0 || !lam.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "tv penalty must be finite and >= 0, got {lam}"
        )));
    }
    let n = v.len();
    if n > MAX_TV_ENUM_LEN {
        return Err(Error::OracleSizeGuard(format!(
            "tv_enumerate certified only up to length {MAX_TV_ENUM_LEN}, got {n}"
        )));
    }
    if n <= 1 {
        return Ok(v.to_vec());
    }

    let combos = 3usize.pow((n - 1) as u32);
    let mut states = vec![0u8; n - 1]; // 0 = fused, 1 = jump up, 2 = jump down
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut z = vec![0.0; n];

    for combo in 0..combos {
        let mut c = combo;
        for s in states.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }

        // Walk segments delimited by non-fused positions.
        let mut start = 0;
        let mut left_eps = 0.0; // sign of the jump entering the current segment
        while start < n {
            let mut end = start;
            while end + 1 < n && states[end] == 0 {
                end += 1;
            }
            let right_eps = if end + 1 < n {
                if states[end] == 1 { 1.0 } else { -1.0 }
            } else {
                0.0
            };
            let len = (end - start + 1) as f64;
            let mean = v[start..=end].iter().sum::<f64>() / len;
            let value = mean + lam * (right_eps - left_eps) / len;
            for zi in z.iter_mut().take(end + 1).skip(start) {
                *zi = value;
            }
            left_eps = right_eps;
            start = end + 1;
        }

        let mut f = 0.0;
        for i in 0..n {
            let r = z[i] - v[i];
            f += 0.5 * r * r;
            if i > 0 {
                f += lam * (z[i] - z[i - 1]).abs();
            }
        }
        if best.as_ref().map_or(true, |(b, _)| f < *b) {
            best = Some((f, z.clone()));
        }
    }
    Ok(best.expect("at least one candidate").1)
}
