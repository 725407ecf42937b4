//! File formats used by the command-line workflows.
//!
//! Indices inside files are 1-based: an edge `[i, j]` refers to CSV columns
//! `var_i` and `var_j`, and a changepoint time is the first row governed by
//! the new model, in `2..=T`.  In-memory types stay 0-based; the conversion
//! happens here and nowhere else.  A `density` array is positional: entry
//! `k` (0-based) counts edges whose value changes between rows `k` and
//! `k + 1` of the series (1-based rows), so entry 0 is always zero.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use gfgl::evaluate::{EdgeChangepoints, GridSearchResult};
use gfgl::simulate::GroundTruth;
use gfgl::types::{Edge, MatrixKind, SymmetricMatrixSequence, TimeSeries};

use crate::CliError;

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path)
        .map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| usage(format!("cannot parse {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| usage(format!("cannot create {}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_all(b"\n")
        .and_then(|()| writer.flush())
        .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_matrix(rows: &[Vec<f64>], p: usize, what: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(usage(format!("{what}: expected a {p}x{p} matrix")));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

fn edge_to_file(e: Edge) -> [usize; 2] {
    [e.0 + 1, e.1 + 1]
}

fn edge_from_file(e: [usize; 2], p: usize, what: &str) -> Result<Edge, CliError> {
    let [a, b] = e;
    if a == 0 || b > p || a >= b {
        return Err(usage(format!(
            "{what}: edge [{a}, {b}] is not a 1-based pair with i < j <= {p}"
        )));
    }
    Ok((a - 1, b - 1))
}

// ---------------------------------------------------------------------------
// series.csv

pub fn write_series_csv(path: &Path, series: &TimeSeries) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| usage(format!("cannot create {}: {e}", path.display())))?;
    let p = series.dim();
    let fail = |e: csv::Error| usage(format!("cannot write {}: {e}", path.display()));
    w.write_record((1..=p).map(|j| format!("var{j}"))).map_err(fail)?;
    for t in 0..series.len() {
        w.write_record(series.data().row(t).iter().map(|x| format!("{x}")))
            .map_err(fail)?;
    }
    w.flush().map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

pub fn read_series_csv(path: &Path) -> Result<TimeSeries, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
    let p = r
        .headers()
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?
        .len();
    let mut values = Vec::new();
    let mut t_len = 0;
    for (row, record) in r.records().enumerate() {
        let record =
            record.map_err(|e| usage(format!("{}: row {}: {e}", path.display(), row + 2)))?;
        if record.len() != p {
            return Err(usage(format!(
                "{}: row {} has {} fields, header has {p}",
                path.display(),
                row + 2,
                record.len()
            )));
        }
        for field in record.iter() {
            let x: f64 = field.trim().parse().map_err(|_| {
                usage(format!(
                    "{}: row {}: '{field}' is not a number",
                    path.display(),
                    row + 2
                ))
            })?;
            values.push(x);
        }
        t_len += 1;
    }
    TimeSeries::new(DMatrix::from_row_slice(t_len, p, &values))
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// truth.json

#[derive(Serialize, Deserialize)]
pub struct TruthFile {
    pub seed: u64,
    pub p: usize,
    pub t: usize,
    /// 1-based first rows of each new segment, strictly increasing in 2..=T.
    pub changepoints: Vec<usize>,
    /// 1-based variable pairs per segment.
    pub segment_edges: Vec<Vec<[usize; 2]>>,
    /// Row-major P x P precision matrices per segment.
    pub segment_precisions: Vec<Vec<Vec<f64>>>,
}

pub fn write_truth(path: &Path, gt: &GroundTruth, p: usize, t: usize) -> Result<(), CliError> {
    let file = TruthFile {
        seed: gt.seed,
        p,
        t,
        changepoints: gt.changepoints.iter().map(|&c| c + 1).collect(),
        segment_edges: gt
            .segment_edges
            .iter()
            .map(|es| es.iter().map(|&e| edge_to_file(e)).collect())
            .collect(),
        segment_precisions: gt.segment_precisions.iter().map(matrix_rows).collect(),
    };
    write_json(path, &file)
}

/// Reads a ground truth back into memory form; returns `(truth, p, t)`.
pub fn read_truth(path: &Path) -> Result<(GroundTruth, usize, usize), CliError> {
    let f: TruthFile = read_json(path)?;
    let what = path.display();
    if f.p < 2 || f.t < 2 {
        return Err(usage(format!("{what}: p and t must both be at least 2")));
    }
    let segments = f.changepoints.len() + 1;
    if f.segment_edges.len() != segments || f.segment_precisions.len() != segments {
        return Err(usage(format!(
            "{what}: {} changepoints need {segments} segment entries",
            f.changepoints.len()
        )));
    }
    let mut changepoints = Vec::with_capacity(f.changepoints.len());
    let mut prev = 1;
    for &c in &f.changepoints {
        if c < 2 || c > f.t || c <= prev {
            return Err(usage(format!(
                "{what}: changepoints must be strictly increasing within 2..={}",
                f.t
            )));
        }
        changepoints.push(c - 1);
        prev = c;
    }
    let segment_edges = f
        .segment_edges
        .iter()
        .map(|es| {
            es.iter()
                .map(|&e| edge_from_file(e, f.p, &format!("{what}: segment_edges")))
                .collect::<Result<Vec<Edge>, CliError>>()
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let segment_precisions = f
        .segment_precisions
        .iter()
        .map(|rows| rows_matrix(rows, f.p, &format!("{what}: segment_precisions")))
        .collect::<Result<Vec<_>, CliError>>()?;
    let gt = GroundTruth { changepoints, segment_precisions, segment_edges, seed: f.seed };
    Ok((gt, f.p, f.t))
}

// ---------------------------------------------------------------------------
// theta.json

#[derive(Serialize, Deserialize)]
pub struct ThetaFile {
    pub p: usize,
    pub t: usize,
    /// T x P x P row-major precision estimates.
    pub theta: Vec<Vec<Vec<f64>>>,
}

pub fn write_theta(path: &Path, theta: &SymmetricMatrixSequence) -> Result<(), CliError> {
    let file = ThetaFile {
        p: theta.dim(),
        t: theta.len(),
        theta: theta.iter().map(matrix_rows).collect(),
    };
    write_json(path, &file)
}

pub fn read_theta(path: &Path) -> Result<SymmetricMatrixSequence, CliError> {
    let f: ThetaFile = read_json(path)?;
    let what = path.display();
    if f.theta.len() != f.t || f.t == 0 {
        return Err(usage(format!("{what}: expected {} matrices", f.t)));
    }
    let mats = f
        .theta
        .iter()
        .map(|rows| rows_matrix(rows, f.p, &format!("{what}: theta")))
        .collect::<Result<Vec<_>, CliError>>()?;
    // Auxiliary kind: symmetry is checked, definiteness is not re-judged on
    // a round-tripped estimate.
    SymmetricMatrixSequence::new(mats, MatrixKind::Auxiliary)
        .map_err(|e| usage(format!("{what}: {e}")))
}

// ---------------------------------------------------------------------------
// support.json

#[derive(Serialize, Deserialize)]
pub struct SupportFile {
    pub p: usize,
    /// Per-time estimated edge lists, 1-based pairs.
    pub support: Vec<Vec<[usize; 2]>>,
}

pub fn write_support(path: &Path, p: usize, support: &[Vec<Edge>]) -> Result<(), CliError> {
    let file = SupportFile {
        p,
        support: support
            .iter()
            .map(|es| es.iter().map(|&e| edge_to_file(e)).collect())
            .collect(),
    };
    write_json(path, &file)
}

pub fn read_support(path: &Path) -> Result<Vec<Vec<Edge>>, CliError> {
    let f: SupportFile = read_json(path)?;
    let what = path.display();
    if f.support.is_empty() {
        return Err(usage(format!("{what}: support list is empty")));
    }
    f.support
        .iter()
        .map(|es| {
            es.iter()
                .map(|&e| edge_from_file(e, f.p, &format!("{what}: support")))
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// changepoints.json

#[derive(Serialize, Deserialize)]
pub struct EdgeTimesFile {
    /// 1-based variable pair.
    pub edge: [usize; 2],
    /// 1-based first rows of the edge's new values, sorted.
    pub times: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
pub struct ChangepointsFile {
    pub p: usize,
    pub t: usize,
    pub k_hat: usize,
    pub per_edge: Vec<EdgeTimesFile>,
    pub density: Vec<usize>,
}

pub fn write_changepoints(
    path: &Path,
    p: usize,
    t: usize,
    est: &EdgeChangepoints,
    density: &[usize],
) -> Result<(), CliError> {
    let file = ChangepointsFile {
        p,
        t,
        k_hat: est.k_hat,
        per_edge: est
            .per_edge
            .iter()
            .map(|(&edge, times)| EdgeTimesFile {
                edge: edge_to_file(edge),
                times: times.iter().map(|&t| t + 1).collect(),
            })
            .collect(),
        density: density.to_vec(),
    };
    write_json(path, &file)
}

/// Reads estimated changepoints back into memory form; returns the estimate
/// and the series length it was extracted from.
pub fn read_changepoints(path: &Path) -> Result<(EdgeChangepoints, usize), CliError> {
    let f: ChangepointsFile = read_json(path)?;
    let what = path.display();
    let mut per_edge: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    let mut k_hat = 0;
    for entry in &f.per_edge {
        let edge = edge_from_file(entry.edge, f.p, &format!("{what}: per_edge"))?;
        let mut times = Vec::with_capacity(entry.times.len());
        let mut prev = 0;
        for &t in &entry.times {
            if t < 2 || t > f.t || t <= prev {
                return Err(usage(format!(
                    "{what}: times must be strictly increasing within 2..={}",
                    f.t
                )));
            }
            times.push(t - 1);
            prev = t;
        }
        k_hat += times.len();
        if per_edge.insert(edge, times).is_some() {
            return Err(usage(format!("{what}: duplicate edge {:?}", entry.edge)));
        }
    }
    if k_hat != f.k_hat {
        return Err(usage(format!(
            "{what}: k_hat is {} but the lists hold {k_hat} times",
            f.k_hat
        )));
    }
    Ok((EdgeChangepoints { per_edge, k_hat }, f.t))
}

// ---------------------------------------------------------------------------
// fitlog.json

#[derive(Serialize, Deserialize, Clone)]
pub struct FitParams {
    pub method: String,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub covariance: String,
    pub width: Option<f64>,
    pub difference: bool,
}

#[derive(Serialize, Deserialize)]
pub struct HistoryRowFile {
    pub iter: usize,
    pub r_prime: f64,
    pub r_dual: f64,
    pub objective: f64,
}

#[derive(Serialize, Deserialize)]
pub struct FitLogFile {
    pub params: FitParams,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub wall_seconds: f64,
    pub residual_history: Vec<HistoryRowFile>,
}

// ---------------------------------------------------------------------------
// metrics.json

#[derive(Serialize, Deserialize)]
pub struct MetricsParamsFile {
    pub beta: f64,
    pub tol: f64,
    pub fit: FitParams,
}

#[derive(Serialize, Deserialize)]
pub struct MetricsFile {
    pub f_series: Vec<f64>,
    pub f_mean: f64,
    /// `null` when nothing could be scored (no estimated or true breaks).
    pub mae: Option<f64>,
    pub density: Vec<usize>,
    pub params: MetricsParamsFile,
}

// ---------------------------------------------------------------------------
// grid.json

#[derive(Serialize, Deserialize)]
pub struct PairFile {
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Serialize, Deserialize)]
pub struct GridRowFile {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Mean F1 per training series; `null` marks a failed fit.
    pub series_f1: Vec<Option<f64>>,
    /// `null` when every training fit failed at this point.
    pub mean_f1: Option<f64>,
    pub failures: usize,
}

#[derive(Serialize, Deserialize)]
pub struct GridFile {
    pub selected: PairFile,
    pub per_series: Vec<PairFile>,
    pub table: Vec<GridRowFile>,
}

pub fn write_grid(path: &Path, result: &GridSearchResult) -> Result<(), CliError> {
    let file = GridFile {
        selected: PairFile { lambda1: result.selected.0, lambda2: result.selected.1 },
        per_series: result
            .per_series
            .iter()
            .map(|&(lambda1, lambda2)| PairFile { lambda1, lambda2 })
            .collect(),
        table: result
            .table
            .iter()
            .map(|cell| GridRowFile {
                lambda1: cell.lambda1,
                lambda2: cell.lambda2,
                series_f1: cell.series_f1.clone(),
                mean_f1: cell.mean_f1.is_finite().then_some(cell.mean_f1),
                failures: cell.failures,
            })
            .collect(),
    };
    write_json(path, &file)
}

// ---------------------------------------------------------------------------
// bench.csv

#[derive(Serialize, Deserialize)]
pub struct BenchRow {
    pub p: usize,
    pub t: usize,
    pub repeat: usize,
    pub wall_seconds: f64,
    pub iterations: usize,
    pub k_hat: usize,
}

pub fn write_bench(path: &Path, rows: &[BenchRow]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| usage(format!("cannot create {}: {e}", path.display())))?;
    let fail = |e: csv::Error| usage(format!("cannot write {}: {e}", path.display()));
    // Written by hand so the header appears even for an empty run.
    w.write_record(["p", "t", "repeat", "wall_seconds", "iterations", "k_hat"])
        .map_err(fail)?;
    for row in rows {
        w.serialize(row).map_err(fail)?;
    }
    w.flush().map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}
