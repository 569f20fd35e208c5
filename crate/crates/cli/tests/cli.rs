use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_condfgm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "condfgm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, scenario: &str, p: usize, n: usize, seed: u64) {
    ok(&[
        "simulate",
        "--scenario",
        scenario,
        "--p",
        &p.to_string(),
        "--n-per-group",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--m-star",
        "5",
        "--time-points",
        "50",
        "--out",
        s(dir),
    ]);
}

fn fit(data: &Path, out: &Path, extra: &[&str]) {
    let functions = data.join("functions.csv");
    let covariates = data.join("covariates.csv");
    let mut args = vec![
        "fit",
        "--functions",
        s(&functions),
        "--covariates",
        s(&covariates),
        "--out",
        s(out),
    ];
    if !extra.contains(&"--n-lambda") {
        args.extend_from_slice(&["--n-lambda", "12"]);
    }
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_is_byte_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, "S3", 6, 20, 7);
    simulate(&b, "S3", 6, 20, 7);
    for f in ["functions.csv", "covariates.csv", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let truth: Value = serde_json::from_str(&fs::read_to_string(a.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["scenario"], "S3");
    assert_eq!(truth["p"], 6);
}

#[test]
fn invalid_scenario_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["simulate", "--scenario", "S7", "--p", "6", "--n-per-group", "5", "--seed", "1", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("S7"));
}

#[test]
fn fit_output_is_independent_of_thread_count() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "S1", 6, 30, 3);
    let (one, many) = (tmp.path().join("t1"), tmp.path().join("t8"));
    fit(&data, &one, &["--threads", "1"]);
    fit(&data, &many, &["--threads", "8"]);
    for f in [
        "graph_c0.json",
        "graph_c1.json",
        "group_c1.json",
        "adjacency_c0.csv",
        "adjacency_c1.csv",
        "node_results.json",
    ] {
        assert_eq!(fs::read(one.join(f)).unwrap(), fs::read(many.join(f)).unwrap(), "{f}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(one.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["p"], 6);
    assert_eq!(manifest["q"], 1);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);
    assert!(manifest["outputs"]["graph_c0.json"].as_str().unwrap().len() == 64);
}

#[test]
fn no_covariates_gives_population_graph_only() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "S1", 5, 15, 2);
    let out = tmp.path().join("fit");
    let functions = data.join("functions.csv");
    ok(&["fit", "--functions", s(&functions), "--n-lambda", "8", "--out", s(&out)]);
    assert!(out.join("graph_c0.json").exists());
    assert!(!out.join("graph_c1.json").exists());
    assert!(!out.join("group_c1.json").exists());
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "S1", 5, 15, 4);
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# small run\nmode = AND\nm = 2\nn_lambda = 6\n").unwrap();
    let out = tmp.path().join("fit");
    fit(&data, &out, &["--config", s(&cfg), "--m", "3"]);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["m"], 3);
    let g: Value = serde_json::from_str(&fs::read_to_string(out.join("graph_c0.json")).unwrap()).unwrap();
    assert_eq!(g["mode"], "AND");
}

#[test]
fn invalid_input_fails_before_fitting() {
    let tmp = TempDir::new().unwrap();
    let functions = tmp.path().join("f.csv");
    fs::write(
        &functions,
        "sample_id,node_id,time,value\na,n1,0.1,1\na,n1,0.2,NaN\na,n2,0.1,1\na,n2,0.2,2\n",
    )
    .unwrap();
    let out = tmp.path().join("fit");
    let res = run(&["fit", "--functions", s(&functions), "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(!out.join("graph_c0.json").exists());
}

fn write_estimate_from_truth(dir: &Path, truth_dir: &Path, empty: bool) {
    let truth: Value = serde_json::from_str(&fs::read_to_string(truth_dir.join("truth.json")).unwrap()).unwrap();
    fs::create_dir_all(dir).unwrap();
    for (c, key, kind) in [(0, "g0", "population"), (1, "g1", "differential")] {
        let edges: Vec<Value> = if empty {
            Vec::new()
        } else {
            truth["graphs"][key]
                .as_array()
                .unwrap()
                .iter()
                .map(|e| serde_json::json!({"u": e[0], "v": e[1], "weight": if c == 0 { Value::Null } else { 1.0.into() }}))
                .collect()
        };
        let g = serde_json::json!({
            "kind": kind,
            "covariate_name": "group=g1",
            "node_ids": truth["node_ids"],
            "p": truth["p"],
            "mode": "OR",
            "covariate": c,
            "edges": edges,
        });
        fs::write(dir.join(format!("graph_c{c}.json")), serde_json::to_string(&g).unwrap()).unwrap();
    }
}

fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn evaluate_perfect_and_empty_estimates() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "S3", 9, 5, 1);
    let truth = data.join("truth.json");

    let perfect = tmp.path().join("perfect");
    write_estimate_from_truth(&perfect, &data, false);
    let metrics = tmp.path().join("m.csv");
    ok(&["evaluate", s(&perfect), "--truth", s(&truth), "--out", s(&metrics)]);
    let rows = read_rows(&metrics);
    let f1: Vec<f64> = rows.iter().filter(|r| &r[0] != "summary").map(|r| r[13].parse().unwrap()).collect();
    assert_eq!(f1, vec![1.0, 1.0]);

    let empty = tmp.path().join("empty");
    write_estimate_from_truth(&empty, &data, true);
    ok(&["evaluate", s(&empty), "--truth", s(&truth), "--out", s(&metrics)]);
    for r in read_rows(&metrics).iter().filter(|r| &r[0] != "summary") {
        assert_eq!(r[11].parse::<f64>().unwrap(), 0.0, "TPR of {}", &r[4]);
    }
}

#[test]
fn evaluate_rejects_mismatched_p() {
    let tmp = TempDir::new().unwrap();
    let (small, big) = (tmp.path().join("small"), tmp.path().join("big"));
    simulate(&small, "S1", 5, 5, 1);
    simulate(&big, "S1", 6, 5, 1);
    let est = tmp.path().join("est");
    write_estimate_from_truth(&est, &small, false);
    let res = run(&[
        "evaluate",
        s(&est),
        "--truth",
        s(&big.join("truth.json")),
        "--out",
        s(&tmp.path().join("m.csv")),
    ]);
    assert!(!res.status.success());
}

#[test]
fn evaluate_batch_of_replicates() {
    let tmp = TempDir::new().unwrap();
    let dirs: Vec<PathBuf> = (0..10).map(|r| tmp.path().join(format!("rep{r}"))).collect();
    for (r, dir) in dirs.iter().enumerate() {
        simulate(dir, "S1", 5, 20, 100 + r as u64);
        fit(dir, dir, &["--m", "2", "--n-lambda", "6"]);
    }
    let metrics = tmp.path().join("metrics.csv");
    let mut args = vec!["evaluate", "--out", s(&metrics)];
    args.extend(dirs.iter().map(|d| s(d)));
    ok(&args);
    let rows = read_rows(&metrics);
    for graph in ["G0", "G1", "group1"] {
        assert_eq!(rows.iter().filter(|r| &r[4] == graph && &r[0] != "summary").count(), 10);
        let summary: Vec<_> = rows.iter().filter(|r| &r[4] == graph && &r[0] == "summary").collect();
        assert_eq!(summary.len(), 1);
        let (lo, mean, hi): (f64, f64, f64) =
            (summary[0][14].parse().unwrap(), summary[0][15].parse().unwrap(), summary[0][16].parse().unwrap());
        assert!(lo <= mean && mean <= hi);
    }
}

#[test]
fn bench_writes_timing_table() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("bench.csv");
    ok(&[
        "bench", "--p", "4,5", "--n-per-group", "15", "--m-star", "3", "--m", "2", "--n-lambda", "5", "--out", s(&out),
    ]);
    let rows = read_rows(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "4");
}
