//! Synthetic piecewise-stationary scenarios: random sparse precision
//! matrices per segment, shared changepoints, and Gaussian sampling, all
//! byte-reproducible from a seed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::{edge_count, Edge, TimeSeries};

/// Ground truth for one scenario: segment boundaries, the per-segment
/// precision matrices, and the edge sets they realize.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// 0-based index of the first observation governed by each new segment;
    /// strictly increasing, inside `(0, T)`.
    pub changepoints: Vec<usize>,
    /// One SPD precision matrix per segment (`changepoints.len() + 1`).
    pub segment_precisions: Vec<DMatrix<f64>>,
    /// The drawn edges per segment, in canonical `(i, j)`, `j > i` order.
    pub segment_edges: Vec<Vec<Edge>>,
    /// The seed the scenario was generated from.
    pub seed: u64,
}

impl GroundTruth {
    /// Number of segments.
    pub fn segment_count(&self) -> usize {
        self.segment_precisions.len()
    }

    /// Index of the segment governing 0-based time `t`.
    pub fn segment_for_time(&self, t: usize) -> usize {
        self.changepoints.iter().take_while(|&&c| c <= t).count()
    }
}

/// Canonical pair for flat edge index `k` among `p` variables.
fn pair_for_index(mut k: usize, p: usize) -> Edge {
    for i in 0..p {
        let row = p - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
    }
    unreachable!("edge index out of range");
}

/// Exactly `m` distinct undirected edges drawn uniformly from all pairs of
/// `p` vertices, returned in canonical order.
pub fn erdos_renyi_edges<R: Rng>(p: usize, m: usize, rng: &mut R) -> Result<Vec<Edge>> {
    let total = edge_count(p);
    if m > total {
        return Err(Error::InvalidParameter(format!(
            "cannot place {m} edges among {p} vertices ({total} possible)"
        )));
    }
    let mut chosen: Vec<usize> = rand::seq::index::sample(rng, total, m).into_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|k| pair_for_index(k, p)).collect())
}

/// Sparse SPD precision matrix realizing `edges`: half the identity, plus a
/// weight per edge drawn uniformly from `[-1, -1/2] ∪ [1/2, 1]` placed in
/// both triangles, with each |weight| added to both incident diagonal
/// entries, making the matrix strictly diagonally dominant.  With
/// `normalize` the matrix is rescaled to `D X D` with
/// `D = diag(sqrt((X^-1)_ii))`, which sets all implied marginal variances
/// to one while preserving the sparsity pattern exactly.
pub fn build_precision<R: Rng>(
    edges: &[Edge],
    p: usize,
    rng: &mut R,
    normalize: bool,
) -> Result<DMatrix<f64>> {
    let mut theta = DMatrix::from_diagonal_element(p, p, 0.5);
    for &(i, j) in edges {
        if j <= i || j >= p {
            return Err(Error::InvalidParameter(format!(
                "edge ({i}, {j}) is not a canonical pair among {p} variables"
            )));
        }
        let magnitude: f64 = rng.gen_range(0.5..1.0);
        let weight = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
        theta[(i, j)] = weight;
        theta[(j, i)] = weight;
        theta[(i, i)] += magnitude;
        theta[(j, j)] += magnitude;
    }
    if normalize {
        let sigma = theta
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Domain("dominant precision must be SPD".into()))?
            .inverse();
        let scales: Vec<f64> = (0..p).map(|i| sigma[(i, i)].sqrt()).collect();
        for i in 0..p {
            for j in 0..p {
                theta[(i, j)] *= scales[i] * scales[j];
            }
        }
    }
    Ok(theta)
}

/// Independent draws `y_t ~ N(0, inverse of the segment precision)`, one
/// row per time step.  Sampling goes through the precision's Cholesky
/// factor `L`: solving `L' y = e` with standard normal `e` gives the right
/// covariance without ever forming the inverse.
pub fn sample_series<R: Rng>(gt: &GroundTruth, t_len: usize, rng: &mut R) -> Result<TimeSeries> {
    if gt.segment_precisions.is_empty() {
        return Err(Error::Dimension("ground truth needs at least one segment".into()));
    }
    if gt.segment_precisions.len() != gt.changepoints.len() + 1
        || gt.segment_precisions.len() != gt.segment_edges.len()
    {
        return Err(Error::Dimension(
            "ground truth segment counts are inconsistent".into(),
        ));
    }
    if let Some(&last) = gt.changepoints.last() {
        if last >= t_len {
            return Err(Error::InvalidParameter(format!(
                "changepoint {last} is outside the horizon {t_len}"
            )));
        }
    }
    let p = gt.segment_precisions[0].nrows();
    let factors: Vec<DMatrix<f64>> = gt
        .segment_precisions
        .iter()
        .map(|theta| {
            theta
                .clone()
                .cholesky()
                .map(|c| c.l().transpose())
                .ok_or_else(|| Error::Domain("segment precision is not SPD".into()))
        })
        .collect::<Result<_>>()?;

    let mut data = DMatrix::zeros(t_len, p);
    for t in 0..t_len {
        let lt = &factors[gt.segment_for_time(t)];
        let eps = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = lt
            .solve_upper_triangular(&eps)
            .ok_or_else(|| Error::Domain("singular Cholesky factor".into()))?;
        data.row_mut(t).copy_from(&y.transpose());
    }
    TimeSeries::new(data)
}

/// Full scenario: `changepoints.len() + 1` independent sparse graphs with
/// `m` edges each, normalized precisions, and a sampled series of length
/// `t_len`.
///
/// Structure and noise come from separate streams of the seeded generator,
/// so growing the horizon reuses identical segment precisions — scenarios
/// at different lengths stay comparable.
pub fn make_scenario(
    p: usize,
    t_len: usize,
    m: usize,
    changepoints: &[usize],
    seed: u64,
) -> Result<(TimeSeries, GroundTruth)> {
    for (k, &c) in changepoints.iter().enumerate() {
        let ok_order = k == 0 || changepoints[k - 1] < c;
        if !ok_order || c == 0 || c >= t_len {
            return Err(Error::InvalidParameter(format!(
                "changepoints must be strictly increasing inside (0, {t_len}); got {changepoints:?}"
            )));
        }
    }

    let mut structure_rng = ChaCha8Rng::seed_from_u64(seed);
    structure_rng.set_stream(0);
    let segments = changepoints.len() + 1;
    let mut segment_edges = Vec::with_capacity(segments);
    let mut segment_precisions = Vec::with_capacity(segments);
    for _ in 0..segments {
        let edges = erdos_renyi_edges(p, m, &mut structure_rng)?;
        let theta = build_precision(&edges, p, &mut structure_rng, true)?;
        segment_edges.push(edges);
        segment_precisions.push(theta);
    }
    let gt = GroundTruth {
        changepoints: changepoints.to_vec(),
        segment_precisions,
        segment_edges,
        seed,
    };

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let series = sample_series(&gt, t_len, &mut noise_rng)?;
    Ok((series, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn pair_indexing_is_canonical() {
        assert_eq!(pair_for_index(0, 4), (0, 1));
        assert_eq!(pair_for_index(2, 4), (0, 3));
        assert_eq!(pair_for_index(3, 4), (1, 2));
        assert_eq!(pair_for_index(5, 4), (2, 3));
    }

    #[test]
    fn edge_draws_hit_the_degenerate_cases() {
        let mut r = rng(1);
        assert!(erdos_renyi_edges(5, 0, &mut r).unwrap().is_empty());
        let complete = erdos_renyi_edges(4, 6, &mut r).unwrap();
        assert_eq!(complete.len(), 6);
        assert_eq!(complete, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert!(erdos_renyi_edges(4, 7, &mut r).is_err(), "only 6 pairs exist");
    }

    #[test]
    fn edge_draws_are_uniform() {
        let mut r = rng(2);
        let draws = 100_000;
        let mut counts: HashMap<Edge, usize> = HashMap::new();
        for _ in 0..draws {
            for e in erdos_renyi_edges(4, 2, &mut r).unwrap() {
                *counts.entry(e).or_default() += 1;
            }
        }
        // Inclusion probability of each single edge under uniform draws of
        // 2 edges from 6 is 1/3.
        for (edge, count) in counts {
            let freq = count as f64 / draws as f64;
            assert!(
                (freq - 1.0 / 3.0).abs() <= 0.01,
                "edge {edge:?} frequency {freq} is off"
            );
        }
    }

    #[test]
    fn precision_without_edges_is_half_identity() {
        let theta = build_precision(&[], 3, &mut rng(3), false).unwrap();
        assert_eq!(theta, DMatrix::from_diagonal_element(3, 3, 0.5));
    }

    #[test]
    fn precision_single_edge_matches_construction_rule() {
        let theta = build_precision(&[(0, 1)], 2, &mut rng(4), false).unwrap();
        let w = theta[(0, 1)];
        assert!((0.5..1.0).contains(&w.abs()), "weight magnitude in [1/2, 1]");
        assert_eq!(theta[(1, 0)], w);
        assert_eq!(theta[(0, 0)], 0.5 + w.abs());
        assert_eq!(theta[(1, 1)], 0.5 + w.abs());
    }

    #[test]
    fn precision_is_dominant_sparse_and_spd() {
        for seed in 0..20 {
            let mut r = rng(seed);
            let edges = erdos_renyi_edges(6, 7, &mut r).unwrap();
            let theta = build_precision(&edges, 6, &mut r, false).unwrap();
            for i in 0..6 {
                let off: f64 = (0..6).filter(|&j| j != i).map(|j| theta[(i, j)].abs()).sum();
                assert!(theta[(i, i)] >= off + 0.5 - 1e-12, "diagonal dominance fails");
            }
            for i in 0..6 {
                for j in (i + 1)..6 {
                    let present = edges.contains(&(i, j));
                    assert_eq!(theta[(i, j)] != 0.0, present, "pattern must equal edge set");
                    if present {
                        assert!((0.5..1.0).contains(&theta[(i, j)].abs()));
                    }
                }
            }
            let min_eig = theta.clone().symmetric_eigen().eigenvalues.min();
            assert!(min_eig > 0.0);
        }
    }

    #[test]
    fn normalized_precision_has_unit_variances() {
        for seed in 0..10 {
            let mut r = rng(100 + seed);
            let edges = erdos_renyi_edges(5, 4, &mut r).unwrap();
            let theta = build_precision(&edges, 5, &mut r, true).unwrap();
            let sigma = theta.clone().cholesky().unwrap().inverse();
            for i in 0..5 {
                assert!(
                    (sigma[(i, i)] - 1.0).abs() <= 1e-10,
                    "implied variance {} at {i}",
                    sigma[(i, i)]
                );
            }
            // Rescaling by positive factors cannot change the pattern.
            for i in 0..5 {
                for j in (i + 1)..5 {
                    assert_eq!(theta[(i, j)] != 0.0, edges.contains(&(i, j)));
                }
            }
        }
    }

    #[test]
    fn identity_precision_samples_match_law_of_large_numbers() {
        let gt = GroundTruth {
            changepoints: vec![],
            segment_precisions: vec![DMatrix::identity(3, 3)],
            segment_edges: vec![vec![]],
            seed: 0,
        };
        let series = sample_series(&gt, 100_000, &mut rng(5)).unwrap();
        let data = series.data();
        let n = data.nrows() as f64;
        for i in 0..3 {
            for j in 0..3 {
                let emp: f64 = (0..data.nrows()).map(|t| data[(t, i)] * data[(t, j)]).sum::<f64>() / n;
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (emp - want).abs() <= 0.02,
                    "empirical covariance ({i},{j}) = {emp}"
                );
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let (a, _) = make_scenario(4, 30, 3, &[10, 20], 77).unwrap();
        let (b, _) = make_scenario(4, 30, 3, &[10, 20], 77).unwrap();
        assert_eq!(a.data(), b.data(), "same seed must reproduce the series bitwise");
        let (c, _) = make_scenario(4, 30, 3, &[10, 20], 78).unwrap();
        assert_ne!(a.data(), c.data(), "different seeds should differ");
    }

    #[test]
    fn correlation_sign_opposes_precision_sign() {
        let mut theta = DMatrix::identity(2, 2);
        theta[(0, 1)] = 0.8;
        theta[(1, 0)] = 0.8;
        let gt = GroundTruth {
            changepoints: vec![],
            segment_precisions: vec![theta],
            segment_edges: vec![vec![(0, 1)]],
            seed: 0,
        };
        let series = sample_series(&gt, 10_000, &mut rng(6)).unwrap();
        let data = series.data();
        let cross: f64 = (0..10_000).map(|t| data[(t, 0)] * data[(t, 1)]).sum();
        assert!(
            cross < 0.0,
            "positive precision entry implies negative correlation, got {cross}"
        );
    }

    #[test]
    fn scenario_without_changepoints_is_stationary() {
        let (series, gt) = make_scenario(3, 40, 2, &[], 9).unwrap();
        assert_eq!(gt.segment_count(), 1);
        assert!(gt.changepoints.is_empty());
        assert_eq!(series.len(), 40);
        assert_eq!(series.dim(), 3);
        assert_eq!(gt.segment_for_time(0), 0);
        assert_eq!(gt.segment_for_time(39), 0);
    }

    #[test]
    fn scenario_with_midpoint_break() {
        let (series, gt) = make_scenario(10, 50, 10, &[25], 11).unwrap();
        assert_eq!(series.len(), 50);
        assert_eq!(gt.segment_count(), 2);
        assert_eq!(gt.changepoints, vec![25]);
        for k in 0..2 {
            assert_eq!(gt.segment_edges[k].len(), 10);
            let min_eig = gt.segment_precisions[k].clone().symmetric_eigen().eigenvalues.min();
            assert!(min_eig > 0.0);
        }
        assert_eq!(gt.segment_for_time(24), 0);
        assert_eq!(gt.segment_for_time(25), 1);
        // The two regimes are drawn independently and almost surely differ.
        assert_ne!(gt.segment_precisions[0], gt.segment_precisions[1]);
    }

    #[test]
    fn doubling_the_horizon_reuses_segment_precisions() {
        let (_, short) = make_scenario(6, 50, 5, &[25], 13).unwrap();
        let (_, long) = make_scenario(6, 100, 5, &[50], 13).unwrap();
        for k in 0..2 {
            assert_eq!(
                short.segment_precisions[k], long.segment_precisions[k],
                "segment {k} precision must be identical bitwise"
            );
            assert_eq!(short.segment_edges[k], long.segment_edges[k]);
        }
    }

    #[test]
    fn scenario_rejects_bad_changepoints() {
        assert!(make_scenario(3, 20, 2, &[0], 1).is_err(), "0 is not a valid break");
        assert!(make_scenario(3, 20, 2, &[20], 1).is_err(), "T is outside the horizon");
        assert!(make_scenario(3, 20, 2, &[10, 10], 1).is_err(), "must strictly increase");
        assert!(make_scenario(3, 20, 2, &[12, 4], 1).is_err(), "must be sorted");
    }
}
