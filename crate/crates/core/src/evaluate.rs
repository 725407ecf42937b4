//! Scoring of estimates against ground truth: F-beta graph recovery,
//! per-edge changepoint extraction, mean absolute error, changepoint
//! density profiles, and hyperparameter grid search.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::covariance::dirac_covariance;
use crate::error::{Error, Result};
use crate::prox::ProxSettings;
use crate::simulate::GroundTruth;
use crate::solver::{fit, FitResult};
use crate::types::{Edge, Hyperparameters, SymmetricMatrixSequence, TimeSeries};

/// Estimated changepoints per edge: sorted 0-based times at which the
/// estimate for that edge moves, with the total count over all edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeChangepoints {
    /// Per-edge sorted changepoint lists; edges without changepoints are
    /// absent.
    pub per_edge: BTreeMap<Edge, Vec<usize>>,
    /// Sum of all list lengths.
    pub k_hat: usize,
}

/// Scores of one fit against one ground truth.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    /// Per-time F1 of the estimated edge set against the truth.
    pub f_series: Vec<f64>,
    pub f_mean: f64,
    /// Mean absolute error of the estimated changepoints; NaN when there is
    /// nothing to score.
    pub mae: f64,
    /// Number of edges changing at each time step.
    pub density: Vec<usize>,
    /// The hyperparameters the fit used.
    pub params: Hyperparameters,
}

/// One grid point of a search, with one score slot per training series.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Mean F1 per training series, in training order; `None` marks a
    /// failed fit.
    pub series_f1: Vec<Option<f64>>,
    /// Mean F1 over the series whose fits succeeded; NaN if none did.
    pub mean_f1: f64,
    /// Number of training series whose fit failed at this point.
    pub failures: usize,
}

/// Outcome of [`grid_search`].
#[derive(Debug, Clone)]
pub struct GridSearchResult {
    /// Componentwise lower median of the per-series optima.
    pub selected: (f64, f64),
    /// The F1-maximizing pair for each training series that produced at
    /// least one successful fit.
    pub per_series: Vec<(f64, f64)>,
    /// Mean scores for every grid point, in grid order.
    pub table: Vec<GridCell>,
}

/// `F_beta = (1 + b^2) TP / ((1 + b^2) TP + b^2 FN + FP)` between two edge
/// sets; 1 when both are empty (vacuously perfect), 0 when nothing true was
/// recovered.
pub fn fbeta(est: &[Edge], truth: &[Edge], beta: f64) -> f64 {
    assert!(beta > 0.0 && beta.is_finite(), "beta must be finite and > 0");
    let est_set: BTreeSet<Edge> = est.iter().copied().collect();
    let truth_set: BTreeSet<Edge> = truth.iter().copied().collect();
    let tp = est_set.intersection(&truth_set).count() as f64;
    let fp = est_set.difference(&truth_set).count() as f64;
    let fn_ = truth_set.difference(&est_set).count() as f64;
    let b2 = beta * beta;
    let denom = (1.0 + b2) * tp + b2 * fn_ + fp;
    if denom == 0.0 {
        1.0
    } else {
        (1.0 + b2) * tp / denom
    }
}

/// Per-time F-beta of an estimated support against the segment truth, plus
/// its mean over time.
pub fn fbeta_series(
    support: &[Vec<Edge>],
    gt: &GroundTruth,
    beta: f64,
) -> Result<(Vec<f64>, f64)> {
    let t_len = support.len();
    if t_len == 0 {
        return Err(Error::Dimension("support sequence is empty".into()));
    }
    if gt.segment_precisions.len() != gt.changepoints.len() + 1
        || gt.segment_edges.len() != gt.segment_precisions.len()
    {
        return Err(Error::Dimension("ground truth segment counts are inconsistent".into()));
    }
    if gt.changepoints.last().is_some_and(|&c| c >= t_len) {
        return Err(Error::Dimension(format!(
            "ground truth changepoints exceed the fitted horizon {t_len}"
        )));
    }
    let series: Vec<f64> = (0..t_len)
        .map(|t| fbeta(&support[t], &gt.segment_edges[gt.segment_for_time(t)], beta))
        .collect();
    let mean = series.iter().sum::<f64>() / t_len as f64;
    Ok((series, mean))
}

/// Per-time F1 of the fitted support against the segment truth, plus its
/// mean over time.
pub fn f1_series(fit: &FitResult, gt: &GroundTruth) -> Result<(Vec<f64>, f64)> {
    fbeta_series(&fit.support, gt, 1.0)
}

/// Times `t` (0-based) at which each edge's value moves by more than `tol`
/// between consecutive steps.  On the consensus iterate of a fit, `tol = 0`
/// is exact: off changepoints the differences are exactly zero.
pub fn extract_changepoints(seq: &SymmetricMatrixSequence, tol: f64) -> EdgeChangepoints {
    assert!(tol >= 0.0 && tol.is_finite(), "tolerance must be finite and >= 0");
    let p = seq.dim();
    let mut per_edge: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    let mut k_hat = 0;
    for t in 1..seq.len() {
        let (prev, cur) = (seq.get(t - 1), seq.get(t));
        for i in 0..p {
            for j in (i + 1)..p {
                if (cur[(i, j)] - prev[(i, j)]).abs() > tol {
                    per_edge.entry((i, j)).or_default().push(t);
                    k_hat += 1;
                }
            }
        }
    }
    EdgeChangepoints { per_edge, k_hat }
}

/// True changepoints of one edge: the global breaks across which its
/// precision value actually changes.
fn true_edge_changepoints(edge: Edge, gt: &GroundTruth) -> Vec<usize> {
    let (i, j) = edge;
    gt.changepoints
        .iter()
        .enumerate()
        .filter(|&(k, _)| {
            gt.segment_precisions[k][(i, j)] != gt.segment_precisions[k + 1][(i, j)]
        })
        .map(|(_, &c)| c)
        .collect()
}

/// Mean absolute distance from each estimated changepoint to the nearest
/// true changepoint of its edge (nearest global break when that edge has no
/// true change of its own).  NaN when nothing can be scored: no estimates,
/// or a ground truth with no breaks at all.
pub fn mae_changepoints(est: &EdgeChangepoints, gt: &GroundTruth) -> f64 {
    if est.k_hat == 0 || gt.changepoints.is_empty() {
        return f64::NAN;
    }
    let mut total = 0.0;
    for (&edge, times) in &est.per_edge {
        let own = true_edge_changepoints(edge, gt);
        let reference: &[usize] = if own.is_empty() { &gt.changepoints } else { &own };
        for &t in times {
            let nearest = reference
                .iter()
                .map(|&c| (t as i64 - c as i64).unsigned_abs())
                .min()
                .expect("reference list is nonempty");
            total += nearest as f64;
        }
    }
    total / est.k_hat as f64
}

/// Number of edges changing at each time step; sums to `k_hat`.
pub fn changepoint_density(est: &EdgeChangepoints, t_len: usize) -> Vec<usize> {
    let mut density = vec![0usize; t_len];
    for times in est.per_edge.values() {
        for &t in times {
            density[t] += 1;
        }
    }
    density
}

/// Full scorecard of one fit: F1 per time and mean, changepoint MAE from
/// the exact consensus structure, and the density profile.
pub fn report(fit: &FitResult, gt: &GroundTruth, h: &Hyperparameters) -> Result<MetricsReport> {
    let (f_series, f_mean) = f1_series(fit, gt)?;
    let est = extract_changepoints(&fit.aux, 0.0);
    let mae = mae_changepoints(&est, gt);
    let density = changepoint_density(&est, fit.support.len());
    Ok(MetricsReport { f_series, f_mean, mae, density, params: h.clone() })
}

/// Lower median: the value at sorted index `(n - 1) / 2`.
fn lower_median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite penalty weights"));
    values[(values.len() - 1) / 2]
}

/// Tune `(lambda1, lambda2)` on training scenarios: fit every grid pair on
/// every series (all combinations in parallel), pick the mean-F1-maximizing
/// pair per series (ties keep the earliest grid entry), and return the
/// componentwise lower median of those optima.  Failed fits are skipped;
/// the search errors only when every fit failed.
pub fn grid_search(
    train: &[(TimeSeries, GroundTruth)],
    grid: &[(f64, f64)],
    h_base: &Hyperparameters,
    s: &ProxSettings,
) -> Result<GridSearchResult> {
    if train.is_empty() || grid.is_empty() {
        return Err(Error::InvalidParameter(
            "grid search needs at least one training series and one grid pair".into(),
        ));
    }
    let covariances: Vec<SymmetricMatrixSequence> =
        train.iter().map(|(series, _)| dirac_covariance(series)).collect();

    let combos: Vec<(usize, usize)> = (0..train.len())
        .flat_map(|i| (0..grid.len()).map(move |j| (i, j)))
        .collect();
    let flat: Vec<Option<f64>> = combos
        .par_iter()
        .map(|&(i, j)| {
            let mut h = h_base.clone();
            h.lambda1 = grid[j].0;
            h.lambda2 = grid[j].1;
            let fitted = fit(&covariances[i], &h, s).ok()?;
            let (_, mean) = f1_series(&fitted, &train[i].1).ok()?;
            Some(mean)
        })
        .collect();
    let score = |i: usize, j: usize| flat[i * grid.len() + j];

    let mut per_series = Vec::new();
    for i in 0..train.len() {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..grid.len() {
            if let Some(f) = score(i, j) {
                if best.is_none_or(|(b, _)| f > b) {
                    best = Some((f, j));
                }
            }
        }
        if let Some((_, j)) = best {
            per_series.push(grid[j]);
        }
    }
    if per_series.is_empty() {
        return Err(Error::SearchFailed(
            "every fit failed on every training series".into(),
        ));
    }

    let table: Vec<GridCell> = (0..grid.len())
        .map(|j| {
            let series_f1: Vec<Option<f64>> = (0..train.len()).map(|i| score(i, j)).collect();
            let successes: Vec<f64> = series_f1.iter().flatten().copied().collect();
            let failures = train.len() - successes.len();
            let mean_f1 = if successes.is_empty() {
                f64::NAN
            } else {
                successes.iter().sum::<f64>() / successes.len() as f64
            };
            GridCell { lambda1: grid[j].0, lambda2: grid[j].1, series_f1, mean_f1, failures }
        })
        .collect();

    let selected = (
        lower_median(per_series.iter().map(|p| p.0).collect()),
        lower_median(per_series.iter().map(|p| p.1).collect()),
    );
    Ok(GridSearchResult { selected, per_series, table })
}
