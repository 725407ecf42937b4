//! End-to-end tests driving the compiled binary the way a user would.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn gfgl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfgl"))
        .args(args)
        .output()
        .expect("the binary should spawn")
}

fn run_ok(args: &[&str]) {
    let out = gfgl(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_code(args: &[&str]) -> i32 {
    gfgl(args).status.code().expect("the command should exit, not die on a signal")
}

fn read_value(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {path:?}: {e}"))
}

fn simulate_into(dir: &Path, p: &str, t: &str, m: &str, cps: &str, seed: &str) {
    run_ok(&[
        "simulate",
        "--p",
        p,
        "--t",
        t,
        "--m",
        m,
        "--changepoints",
        cps,
        "--seed",
        seed,
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
}

#[test]
fn simulate_is_byte_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate_into(&a, "5", "14", "4", "8", "42");
    simulate_into(&b, "5", "14", "4", "8", "42");
    for name in ["series.csv", "truth.json"] {
        let left = fs::read(a.join(name)).unwrap();
        let right = fs::read(b.join(name)).unwrap();
        assert!(left == right, "{name} differs between identical runs");
    }

    let csv = fs::read_to_string(a.join("series.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("var1,var2,var3,var4,var5"));
    assert_eq!(lines.count(), 14, "one data row per time step");

    let truth = read_value(&a.join("truth.json"));
    assert_eq!(truth["p"], 5);
    assert_eq!(truth["t"], 14);
    assert_eq!(truth["changepoints"], json!([8]));
    assert_eq!(truth["segment_edges"].as_array().unwrap().len(), 2);
}

#[test]
fn fit_writes_a_complete_bundle() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scenario");
    simulate_into(&dir, "4", "12", "3", "7", "11");
    let fit_dir = tmp.path().join("fit");
    run_ok(&[
        "fit",
        "--input",
        dir.join("series.csv").to_str().unwrap(),
        "--method",
        "gfgl",
        "--lambda1",
        "0.2",
        "--lambda2",
        "2",
        "--max-iter",
        "60",
        "--out-dir",
        fit_dir.to_str().unwrap(),
    ]);

    let theta = read_value(&fit_dir.join("theta.json"));
    assert_eq!(theta["p"], 4);
    assert_eq!(theta["t"], 12);
    let frames = theta["theta"].as_array().unwrap();
    assert_eq!(frames.len(), 12);
    assert_eq!(frames[0].as_array().unwrap().len(), 4, "each frame is a p x p matrix");

    let support = read_value(&fit_dir.join("support.json"));
    assert_eq!(support["support"].as_array().unwrap().len(), 12);

    let cps = read_value(&fit_dir.join("changepoints.json"));
    let density: usize =
        cps["density"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).sum();
    assert_eq!(
        density,
        cps["k_hat"].as_u64().unwrap() as usize,
        "the density profile must total the event count"
    );

    let log = read_value(&fit_dir.join("fitlog.json"));
    assert_eq!(log["params"]["method"], "gfgl");
    assert_eq!(log["params"]["covariance"], "dirac");
    let iters = log["iterations"].as_u64().unwrap() as usize;
    assert!(iters >= 1 && iters <= 60);
    assert_eq!(
        log["residual_history"].as_array().unwrap().len(),
        iters,
        "one history row per iteration"
    );
    assert!(log["final_objective"].as_f64().unwrap().is_finite());
}

/// Builds a fit bundle that reproduces the truth exactly and checks the
/// scores come out perfect.
#[test]
fn eval_scores_a_perfect_bundle_as_one() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scenario");
    simulate_into(&dir, "5", "10", "4", "6", "9");
    let truth = read_value(&dir.join("truth.json"));
    let seg_edges: Vec<Vec<Value>> = truth["segment_edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|seg| seg.as_array().unwrap().clone())
        .collect();

    let fit_dir = tmp.path().join("fit");
    fs::create_dir(&fit_dir).unwrap();
    let support: Vec<&Vec<Value>> =
        (0..10).map(|t| &seg_edges[usize::from(t >= 5)]).collect();
    fs::write(
        fit_dir.join("support.json"),
        serde_json::to_string(&json!({"p": 5, "support": support})).unwrap(),
    )
    .unwrap();

    // Every edge whose membership flips at the break certainly changed
    // value there, so scoring its estimate against the truth gives zero
    // distance.
    let as_pairs = |seg: &Vec<Value>| -> Vec<[u64; 2]> {
        seg.iter()
            .map(|e| {
                let p = e.as_array().unwrap();
                [p[0].as_u64().unwrap(), p[1].as_u64().unwrap()]
            })
            .collect()
    };
    let (first, second) = (as_pairs(&seg_edges[0]), as_pairs(&seg_edges[1]));
    let mut changed: Vec<[u64; 2]> = first
        .iter()
        .filter(|e| !second.contains(e))
        .chain(second.iter().filter(|e| !first.contains(e)))
        .copied()
        .collect();
    changed.sort();
    assert!(!changed.is_empty(), "this seed's segments should differ somewhere");
    let per_edge: Vec<Value> =
        changed.iter().map(|e| json!({"edge": e, "times": [6]})).collect();
    let mut density = vec![0usize; 10];
    density[5] = changed.len();
    fs::write(
        fit_dir.join("changepoints.json"),
        serde_json::to_string(&json!({
            "p": 5, "t": 10, "k_hat": changed.len(), "per_edge": per_edge, "density": density
        }))
        .unwrap(),
    )
    .unwrap();
    fs::write(
        fit_dir.join("fitlog.json"),
        serde_json::to_string(&json!({
            "params": {
                "method": "gfgl", "lambda1": 0.1, "lambda2": 5.0, "gamma": 10.0,
                "eps": 1e-3, "max_iter": 500, "covariance": "dirac",
                "width": null, "difference": false
            },
            "iterations": 1, "converged": true, "final_objective": 0.0,
            "wall_seconds": 0.0, "residual_history": []
        }))
        .unwrap(),
    )
    .unwrap();

    run_ok(&[
        "eval",
        "--fit-dir",
        fit_dir.to_str().unwrap(),
        "--truth",
        dir.join("truth.json").to_str().unwrap(),
    ]);
    let metrics = read_value(&fit_dir.join("metrics.json"));
    assert_eq!(metrics["f_mean"], 1.0);
    for f in metrics["f_series"].as_array().unwrap() {
        assert_eq!(f.as_f64().unwrap(), 1.0);
    }
    assert_eq!(metrics["mae"], 0.0);
    assert_eq!(metrics["density"], json!(density));
    assert_eq!(metrics["params"]["beta"], 1.0);
    assert_eq!(metrics["params"]["fit"]["method"], "gfgl");
}

#[test]
fn eval_scores_an_empty_bundle_as_zero() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scenario");
    simulate_into(&dir, "4", "8", "3", "5", "3");
    let fit_dir = tmp.path().join("fit");
    fs::create_dir(&fit_dir).unwrap();
    let no_edges: Vec<Vec<[u64; 2]>> = vec![Vec::new(); 8];
    fs::write(
        fit_dir.join("support.json"),
        serde_json::to_string(&json!({"p": 4, "support": no_edges})).unwrap(),
    )
    .unwrap();
    fs::write(
        fit_dir.join("changepoints.json"),
        serde_json::to_string(&json!({
            "p": 4, "t": 8, "k_hat": 0, "per_edge": [], "density": vec![0; 8]
        }))
        .unwrap(),
    )
    .unwrap();
    fs::write(
        fit_dir.join("fitlog.json"),
        serde_json::to_string(&json!({
            "params": {
                "method": "ifgl", "lambda1": 9.0, "lambda2": 1.0, "gamma": 10.0,
                "eps": 1e-3, "max_iter": 500, "covariance": "dirac",
                "width": null, "difference": false
            },
            "iterations": 1, "converged": true, "final_objective": 0.0,
            "wall_seconds": 0.0, "residual_history": []
        }))
        .unwrap(),
    )
    .unwrap();

    run_ok(&[
        "eval",
        "--fit-dir",
        fit_dir.to_str().unwrap(),
        "--truth",
        dir.join("truth.json").to_str().unwrap(),
    ]);
    let metrics = read_value(&fit_dir.join("metrics.json"));
    assert_eq!(metrics["f_mean"], 0.0, "an empty estimate against real edges scores zero");
    assert_eq!(metrics["mae"], Value::Null, "no estimated breaks means no distance to report");
}

#[test]
fn pipeline_is_value_deterministic_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for run in ["one", "two"] {
        let dir = tmp.path().join(run).join("scenario");
        simulate_into(&dir, "4", "10", "3", "6", "27");
        let fit_dir = tmp.path().join(run).join("fit");
        run_ok(&[
            "fit",
            "--input",
            dir.join("series.csv").to_str().unwrap(),
            "--method",
            "ifgl",
            "--lambda1",
            "0.2",
            "--lambda2",
            "1",
            "--max-iter",
            "40",
            "--out-dir",
            fit_dir.to_str().unwrap(),
        ]);
        run_ok(&[
            "eval",
            "--fit-dir",
            fit_dir.to_str().unwrap(),
            "--truth",
            dir.join("truth.json").to_str().unwrap(),
        ]);
        outputs.push((
            fs::read(dir.join("series.csv")).unwrap(),
            fs::read(fit_dir.join("theta.json")).unwrap(),
            fs::read(fit_dir.join("metrics.json")).unwrap(),
        ));
    }
    assert!(outputs[0].0 == outputs[1].0, "series.csv must be byte-identical across runs");
    assert!(outputs[0].1 == outputs[1].1, "theta.json must be byte-identical across runs");
    assert!(outputs[0].2 == outputs[1].2, "metrics.json must be byte-identical across runs");
}

#[test]
fn heavy_sparsity_empties_the_graph() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scenario");
    simulate_into(&dir, "4", "10", "3", "6", "5");
    let fit_dir = tmp.path().join("fit");
    run_ok(&[
        "fit",
        "--input",
        dir.join("series.csv").to_str().unwrap(),
        "--method",
        "ifgl",
        "--lambda1",
        "1000",
        "--lambda2",
        "1",
        "--max-iter",
        "30",
        "--out-dir",
        fit_dir.to_str().unwrap(),
    ]);
    let support = read_value(&fit_dir.join("support.json"));
    for (t, row) in support["support"].as_array().unwrap().iter().enumerate() {
        assert!(row.as_array().unwrap().is_empty(), "expected no edges at step {t}");
    }
}

#[test]
fn kernel_estimators_need_a_width_and_dirac_rejects_one() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scenario");
    simulate_into(&dir, "4", "10", "3", "6", "13");
    let series = dir.join("series.csv");
    let out = tmp.path().join("fit");
    let base = [
        "fit",
        "--input",
        series.to_str().unwrap(),
        "--method",
        "ifgl",
        "--lambda1",
        "0.2",
        "--lambda2",
        "1",
        "--max-iter",
        "20",
        "--out-dir",
        out.to_str().unwrap(),
    ];

    let mut boxcar = base.to_vec();
    boxcar.extend(["--covariance", "boxcar"]);
    assert_eq!(run_code(&boxcar), 2, "kernel estimators require --width");

    let mut dirac = base.to_vec();
    dirac.extend(["--width", "2"]);
    assert_eq!(run_code(&dirac), 2, "--width is meaningless for the dirac estimator");

    boxcar.extend(["--width", "2"]);
    run_ok(&boxcar);
    assert!(out.join("theta.json").exists());
}

#[test]
fn usage_mistakes_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    // Asking for more edges than 4 variables can host.
    let sim = [
        "simulate",
        "--p",
        "4",
        "--t",
        "10",
        "--m",
        "7",
        "--seed",
        "1",
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ];
    assert_eq!(run_code(&sim), 2);

    // A malformed number inside the series.
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "var1,var2\n0.5,1.0\n0.25,oops\n").unwrap();
    let fit = [
        "fit",
        "--input",
        bad.to_str().unwrap(),
        "--method",
        "gfgl",
        "--lambda1",
        "0.1",
        "--lambda2",
        "1",
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ];
    assert_eq!(run_code(&fit), 2);

    // A fit bundle that does not exist.
    let nowhere = tmp.path().join("nowhere");
    let nowhere_truth = tmp.path().join("nowhere.json");
    let eval = [
        "eval",
        "--fit-dir",
        nowhere.to_str().unwrap(),
        "--truth",
        nowhere_truth.to_str().unwrap(),
    ];
    assert_eq!(run_code(&eval), 2);

    // A negative penalty weight.
    let tiny = tmp.path().join("tiny");
    simulate_into(&tiny, "4", "8", "3", "", "2");
    let tiny_series = tiny.join("series.csv");
    let neg = [
        "fit",
        "--input",
        tiny_series.to_str().unwrap(),
        "--method",
        "gfgl",
        "--lambda1",
        "-0.5",
        "--lambda2",
        "1",
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ];
    assert_eq!(run_code(&neg), 2);
}

#[test]
fn grid_with_one_cell_selects_it() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("scenario");
    simulate_into(&dir, "4", "12", "3", "7", "17");
    let out = tmp.path().join("out");
    fs::create_dir(&out).unwrap();
    run_ok(&[
        "grid",
        "--train-dir",
        dir.to_str().unwrap(),
        "--lambda1-grid",
        "0.2",
        "--lambda2-grid",
        "1.5",
        "--method",
        "ifgl",
        "--max-iter",
        "40",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let grid = read_value(&out.join("grid.json"));
    let pair = json!({"lambda1": 0.2, "lambda2": 1.5});
    assert_eq!(grid["selected"], pair);
    assert_eq!(grid["per_series"], json!([pair]));
    let table = grid["table"].as_array().unwrap();
    assert_eq!(table.len(), 1);
    assert_eq!(table[0]["failures"], 0);
    assert!(table[0]["mean_f1"].as_f64().unwrap() >= 0.0);
}

#[test]
fn bench_reports_one_row_per_cell_and_repeat() {
    let tmp = TempDir::new().unwrap();
    run_ok(&[
        "bench",
        "--p-list",
        "4",
        "--t-list",
        "12,16",
        "--repeats",
        "2",
        "--method",
        "ifgl",
        "--lambda2",
        "1",
        "--max-iter",
        "15",
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(tmp.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "p,t,repeat,wall_seconds,iterations,k_hat");
    assert_eq!(lines.len(), 5, "two sizes x two repeats plus the header");
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], "4");
        assert!(fields[3].parse::<f64>().unwrap() >= 0.0);
        assert!(fields[4].parse::<usize>().unwrap() >= 1);
    }
}
