//! Command-line workflows around the estimator: generate synthetic
//! scenarios, fit a model to a series, score fits against a ground truth,
//! tune penalty weights on a grid, and time fits across problem sizes.
//!
//! Exit codes: 0 on success (including a fit that hit its iteration cap,
//! which is recorded rather than fatal), 2 for usage and input problems,
//! 3 for numerical failures inside the solver.

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use gfgl::covariance::{dirac_covariance, difference_series, kernel_covariance, Kernel};
use gfgl::evaluate::{
    changepoint_density, extract_changepoints, fbeta_series, grid_search, mae_changepoints,
};
use gfgl::prox::ProxSettings;
use gfgl::simulate::make_scenario;
use gfgl::solver::fit;
use gfgl::types::{Hyperparameters, Method, TimeSeries};

/// Failures split by exit code: usage and input problems exit 2, numerical
/// failures exit 3.
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl From<gfgl::Error> for CliError {
    fn from(e: gfgl::Error) -> Self {
        match e {
            gfgl::Error::Dimension(_)
            | gfgl::Error::Symmetry(_)
            | gfgl::Error::InvalidParameter(_) => CliError::Usage(e.to_string()),
            gfgl::Error::Domain(_)
            | gfgl::Error::ProxDidNotConverge { .. }
            | gfgl::Error::OracleSizeGuard(_)
            | gfgl::Error::SearchFailed(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "gfgl",
    version,
    about = "Piecewise-constant graphical model estimation with fused penalties"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario: series.csv and truth.json.
    Simulate(SimulateArgs),
    /// Fit an estimator to a series; writes theta.json, support.json,
    /// changepoints.json and fitlog.json.
    Fit(FitArgs),
    /// Score a fitted bundle against a ground truth; writes metrics.json.
    Eval(EvalArgs),
    /// Tune penalty weights on training scenarios; writes grid.json.
    Grid(GridArgs),
    /// Time fits across problem sizes; writes bench.csv.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMethod {
    /// Group fusion: changepoints shared across edges.
    Gfgl,
    /// Independent fusion: per-edge changepoints.
    Ifgl,
}

impl CliMethod {
    fn to_method(self) -> Method {
        match self {
            CliMethod::Gfgl => Method::Gfgl,
            CliMethod::Ifgl => Method::Ifgl,
        }
    }

    fn name(self) -> &'static str {
        match self {
            CliMethod::Gfgl => "gfgl",
            CliMethod::Ifgl => "ifgl",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CliCovariance {
    /// Per-time outer product of the observation.
    Dirac,
    /// Sliding-window average with a hard cutoff at the width.
    Boxcar,
    /// Gaussian-weighted window.
    Gaussian,
}

impl CliCovariance {
    fn name(self) -> &'static str {
        match self {
            CliCovariance::Dirac => "dirac",
            CliCovariance::Boxcar => "boxcar",
            CliCovariance::Gaussian => "gaussian",
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of variables.
    #[arg(long)]
    p: usize,
    /// Number of time steps.
    #[arg(long)]
    t: usize,
    /// Number of edges in each segment's graph.
    #[arg(long)]
    m: usize,
    /// Comma-separated changepoint times (1-based first row of each new
    /// segment, strictly increasing in 2..=T); empty for a single segment.
    #[arg(long, default_value = "")]
    changepoints: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Input series CSV (header row, one observation per line).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: CliMethod,
    /// Sparsity weight.
    #[arg(long)]
    lambda1: f64,
    /// Smoothing weight on consecutive differences.
    #[arg(long)]
    lambda2: f64,
    /// ADMM step parameter.
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
    /// Convergence tolerance for both ADMM residuals.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// First-difference the series before estimation (innovations
    /// preprocessing); shortens the series by one step.
    #[arg(long)]
    difference: bool,
    #[arg(long, value_enum, default_value_t = CliCovariance::Dirac)]
    covariance: CliCovariance,
    /// Kernel width for the boxcar/gaussian estimators.
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory holding a fit bundle (support.json, changepoints.json,
    /// theta.json, fitlog.json); metrics.json is written next to them.
    #[arg(long)]
    fit_dir: PathBuf,
    /// Ground-truth file from `simulate`.
    #[arg(long)]
    truth: PathBuf,
    /// Weight of recall against precision in the F score.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// 0 scores the exact changepoints recorded by the fit; above 0
    /// re-extracts them from theta.json at this threshold.
    #[arg(long, default_value_t = 0.0)]
    tol: f64,
}

#[derive(Args)]
struct GridArgs {
    /// Training scenario directory (series.csv + truth.json); repeatable.
    #[arg(long = "train-dir", required = true)]
    train_dirs: Vec<PathBuf>,
    /// Comma-separated candidate sparsity weights.
    #[arg(long)]
    lambda1_grid: String,
    /// Comma-separated candidate smoothing weights.
    #[arg(long)]
    lambda2_grid: String,
    #[arg(long, value_enum)]
    method: CliMethod,
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Thread cap for the concurrent fits (GFGL_JOBS env var as fallback;
    /// default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated variable counts.
    #[arg(long)]
    p_list: String,
    /// Comma-separated series lengths.
    #[arg(long)]
    t_list: String,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, value_enum)]
    method: CliMethod,
    #[arg(long, default_value_t = 0.2)]
    lambda1: f64,
    #[arg(long, default_value_t = 10.0)]
    lambda2: f64,
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Base seed; benchmark row i uses seed + i.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Concurrent fits (GFGL_JOBS env var as fallback).  Defaults to 1 so
    /// wall times do not contend with each other.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|part| !part.is_empty())
        .map(|part| {
            part.parse::<T>()
                .map_err(|_| CliError::Usage(format!("{what}: '{part}' is not a valid value")))
        })
        .collect()
}

/// Converts 1-based file changepoints to the 0-based in-memory form.
fn parse_changepoints(s: &str, t: usize) -> Result<Vec<usize>, CliError> {
    let times: Vec<usize> = parse_list(s, "--changepoints")?;
    times
        .into_iter()
        .map(|c| {
            if c < 2 || c > t {
                Err(CliError::Usage(format!(
                    "--changepoints: {c} is outside 2..={t}"
                )))
            } else {
                Ok(c - 1)
            }
        })
        .collect()
}

fn jobs_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("GFGL_JOBS") {
        Ok(v) => v
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("GFGL_JOBS: '{v}' is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn build_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build a {jobs}-thread pool: {e}")))
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), CliError> {
    let changepoints = parse_changepoints(&a.changepoints, a.t)?;
    let (series, truth) = make_scenario(a.p, a.t, a.m, &changepoints, a.seed)?;
    std::fs::create_dir_all(&a.out_dir)?;
    io::write_series_csv(&a.out_dir.join("series.csv"), &series)?;
    io::write_truth(&a.out_dir.join("truth.json"), &truth, a.p, a.t)
}

fn hyperparameters(
    lambda1: f64,
    lambda2: f64,
    method: CliMethod,
    gamma: f64,
    eps: f64,
    max_iter: usize,
) -> Hyperparameters {
    let mut h = Hyperparameters::new(lambda1, lambda2, method.to_method());
    h.gamma = gamma;
    h.eps_prime = eps;
    h.eps_dual = eps;
    h.max_iter = max_iter;
    h
}

fn cmd_fit(a: FitArgs) -> Result<(), CliError> {
    let raw = io::read_series_csv(&a.input)?;
    let series = if a.difference { difference_series(&raw)? } else { raw };
    let cov = match a.covariance {
        CliCovariance::Dirac => {
            if a.width.is_some() {
                return Err(CliError::Usage(
                    "--width only applies to the boxcar/gaussian estimators".into(),
                ));
            }
            dirac_covariance(&series)
        }
        CliCovariance::Boxcar | CliCovariance::Gaussian => {
            let width = a.width.ok_or_else(|| {
                CliError::Usage(format!(
                    "--covariance {} requires --width",
                    a.covariance.name()
                ))
            })?;
            let kernel = match a.covariance {
                CliCovariance::Boxcar => Kernel::Boxcar,
                _ => Kernel::Gaussian,
            };
            kernel_covariance(&series, kernel, width)?
        }
    };
    let h = hyperparameters(a.lambda1, a.lambda2, a.method, a.gamma, a.eps, a.max_iter);
    let started = Instant::now();
    let fitted = fit(&cov, &h, &ProxSettings::default())?;
    let wall_seconds = started.elapsed().as_secs_f64();

    std::fs::create_dir_all(&a.out_dir)?;
    let p = series.dim();
    let t = series.len();
    io::write_theta(&a.out_dir.join("theta.json"), &fitted.theta)?;
    io::write_support(&a.out_dir.join("support.json"), p, &fitted.support)?;
    let est = extract_changepoints(&fitted.aux, 0.0);
    let density = changepoint_density(&est, t);
    io::write_changepoints(&a.out_dir.join("changepoints.json"), p, t, &est, &density)?;
    let log = io::FitLogFile {
        params: io::FitParams {
            method: a.method.name().into(),
            lambda1: a.lambda1,
            lambda2: a.lambda2,
            gamma: a.gamma,
            eps: a.eps,
            max_iter: a.max_iter,
            covariance: a.covariance.name().into(),
            width: a.width,
            difference: a.difference,
        },
        iterations: fitted.iterations,
        converged: fitted.converged,
        final_objective: fitted.final_objective,
        wall_seconds,
        residual_history: fitted
            .history
            .iter()
            .map(|s| io::HistoryRowFile {
                iter: s.iter,
                r_prime: s.r_prime,
                r_dual: s.r_dual,
                objective: s.objective,
            })
            .collect(),
    };
    io::write_json(&a.out_dir.join("fitlog.json"), &log)
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    if !(a.beta > 0.0 && a.beta.is_finite()) {
        return Err(CliError::Usage(format!(
            "--beta must be finite and > 0, got {}",
            a.beta
        )));
    }
    if !(a.tol >= 0.0 && a.tol.is_finite()) {
        return Err(CliError::Usage(format!(
            "--tol must be finite and >= 0, got {}",
            a.tol
        )));
    }
    let (truth, _, _) = io::read_truth(&a.truth)?;
    let support = io::read_support(&a.fit_dir.join("support.json"))?;
    let (f_series, f_mean) = fbeta_series(&support, &truth, a.beta)?;
    let est = if a.tol == 0.0 {
        let (est, t) = io::read_changepoints(&a.fit_dir.join("changepoints.json"))?;
        if t != support.len() {
            return Err(CliError::Usage(format!(
                "changepoints.json covers {t} steps but support.json covers {}",
                support.len()
            )));
        }
        est
    } else {
        let theta = io::read_theta(&a.fit_dir.join("theta.json"))?;
        extract_changepoints(&theta, a.tol)
    };
    let mae = mae_changepoints(&est, &truth);
    let density = changepoint_density(&est, support.len());
    let log: io::FitLogFile = io::read_json(&a.fit_dir.join("fitlog.json"))?;
    let metrics = io::MetricsFile {
        f_series,
        f_mean,
        mae: mae.is_finite().then_some(mae),
        density,
        params: io::MetricsParamsFile { beta: a.beta, tol: a.tol, fit: log.params },
    };
    io::write_json(&a.fit_dir.join("metrics.json"), &metrics)
}

fn read_scenario(dir: &Path) -> Result<(TimeSeries, gfgl::simulate::GroundTruth), CliError> {
    let series = io::read_series_csv(&dir.join("series.csv"))?;
    let (truth, _, _) = io::read_truth(&dir.join("truth.json"))?;
    Ok((series, truth))
}

fn cmd_grid(a: GridArgs) -> Result<(), CliError> {
    let l1s: Vec<f64> = parse_list(&a.lambda1_grid, "--lambda1-grid")?;
    let l2s: Vec<f64> = parse_list(&a.lambda2_grid, "--lambda2-grid")?;
    if l1s.is_empty() || l2s.is_empty() {
        return Err(CliError::Usage("the penalty grids must be nonempty".into()));
    }
    let grid: Vec<(f64, f64)> = l1s
        .iter()
        .flat_map(|&l1| l2s.iter().map(move |&l2| (l1, l2)))
        .collect();
    let train = a
        .train_dirs
        .iter()
        .map(|d| read_scenario(d))
        .collect::<Result<Vec<_>, _>>()?;
    let h = hyperparameters(0.0, 0.0, a.method, a.gamma, a.eps, a.max_iter);
    let settings = ProxSettings::default();
    let jobs = match a.jobs {
        Some(j) => Some(j),
        None => jobs_from_env()?,
    };
    let result = match jobs {
        None => grid_search(&train, &grid, &h, &settings)?,
        Some(j) => build_pool(j)?.install(|| grid_search(&train, &grid, &h, &settings))?,
    };
    std::fs::create_dir_all(&a.out_dir)?;
    io::write_grid(&a.out_dir.join("grid.json"), &result)
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let ps: Vec<usize> = parse_list(&a.p_list, "--p-list")?;
    let ts: Vec<usize> = parse_list(&a.t_list, "--t-list")?;
    if ps.is_empty() || ts.is_empty() {
        return Err(CliError::Usage("the size lists must be nonempty".into()));
    }
    struct RowSpec {
        p: usize,
        t: usize,
        repeat: usize,
        seed: u64,
    }
    let mut specs = Vec::new();
    for &p in &ps {
        for &t in &ts {
            for repeat in 0..a.repeats {
                let seed = a.seed + specs.len() as u64;
                specs.push(RowSpec { p, t, repeat, seed });
            }
        }
    }
    let settings = ProxSettings::default();
    let run_row = |spec: &RowSpec| -> Result<io::BenchRow, CliError> {
        // One mid-series break; the segment graphs carry about one edge per
        // variable, capped by the number of available slots.
        let m = spec.p.min(spec.p * (spec.p - 1) / 2);
        let (series, _) = make_scenario(spec.p, spec.t, m, &[spec.t / 2], spec.seed)?;
        let cov = dirac_covariance(&series);
        let h = hyperparameters(a.lambda1, a.lambda2, a.method, a.gamma, a.eps, a.max_iter);
        let started = Instant::now();
        let fitted = fit(&cov, &h, &settings)?;
        let wall_seconds = started.elapsed().as_secs_f64();
        let est = extract_changepoints(&fitted.aux, 0.0);
        Ok(io::BenchRow {
            p: spec.p,
            t: spec.t,
            repeat: spec.repeat,
            wall_seconds,
            iterations: fitted.iterations,
            k_hat: est.k_hat,
        })
    };
    let jobs = match a.jobs {
        Some(j) => Some(j),
        None => jobs_from_env()?,
    };
    let rows: Vec<io::BenchRow> = match jobs {
        None | Some(1) => specs.iter().map(run_row).collect::<Result<_, _>>()?,
        Some(j) => build_pool(j)?
            .install(|| specs.par_iter().map(run_row).collect::<Result<_, _>>())?,
    };
    std::fs::create_dir_all(&a.out_dir)?;
    io::write_bench(&a.out_dir.join("bench.csv"), &rows)
}
