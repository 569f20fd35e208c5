use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use condfgm::fmt_f64;
use condfgm::graphs::{EdgeSet, Graph};
use condfgm::metrics::{evaluate, ConfusionCounts, Scores};

use crate::files::{graph_file, group_graph_file, read_json, GraphFile, TruthFile, TRUTH_FILE};
use crate::EvaluateArgs;

/// One scored graph of one replicate.
#[derive(Clone, Debug)]
pub struct MetricRow {
    pub replicate: String,
    pub scenario: String,
    pub p: usize,
    pub n: usize,
    pub graph: &'static str,
    pub mode: String,
    pub counts: ConfusionCounts,
    pub scores: Scores,
}

fn load_graph(path: &Path, truth: &TruthFile) -> Result<(EdgeSet, String)> {
    let file = GraphFile::read(path)?;
    if file.graph.p != truth.p {
        bail!("{}: estimate has p = {}, truth has p = {}", path.display(), file.graph.p, truth.p);
    }
    if file.node_ids != truth.node_ids {
        bail!("{}: node ids differ from the truth file", path.display());
    }
    let g = Graph::from_json(&file.graph)?;
    Ok((g.edge_set(), g.mode.to_string()))
}

/// Scores G0, the differential graph of `covariate` and its group graph when present.
pub fn score_replicate(dir: &Path, truth: &TruthFile, covariate: usize, replicate: String) -> Result<Vec<MetricRow>> {
    let targets = [
        ("G0", dir.join(graph_file(0)), &truth.graphs.g0),
        ("G1", dir.join(graph_file(covariate)), &truth.graphs.g1),
        ("group1", dir.join(group_graph_file(covariate)), &truth.graphs.group1),
    ];
    let mut rows = Vec::new();
    for (graph, path, true_edges) in targets {
        if !path.exists() {
            if graph == "G0" {
                bail!("{} not found", path.display());
            }
            continue;
        }
        let (est, mode) = load_graph(&path, truth)?;
        let (counts, scores) = evaluate(&est, true_edges, truth.p)?;
        rows.push(MetricRow {
            replicate: replicate.clone(),
            scenario: truth.scenario.to_string(),
            p: truth.p,
            n: 2 * truth.n_per_group,
            graph,
            mode,
            counts,
            scores,
        });
    }
    Ok(rows)
}

pub fn write_metrics(rows: &[MetricRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "replicate", "scenario", "p", "n", "graph", "mode", "tp", "fp", "fn", "tn", "precision", "tpr", "fpr", "f1",
        "f1_min", "f1_mean", "f1_max",
    ])?;
    for r in rows {
        w.write_record([
            r.replicate.clone(),
            r.scenario.clone(),
            r.p.to_string(),
            r.n.to_string(),
            r.graph.to_string(),
            r.mode.clone(),
            r.counts.tp.to_string(),
            r.counts.fp.to_string(),
            r.counts.fn_.to_string(),
            r.counts.tn.to_string(),
            fmt_f64(r.scores.precision),
            fmt_f64(r.scores.tpr),
            fmt_f64(r.scores.fpr),
            fmt_f64(r.scores.f1),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    // one summary row per (scenario, p, n, graph, mode)
    let mut groups: BTreeMap<(String, usize, usize, &str, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.scenario.clone(), r.p, r.n, r.graph, r.mode.clone()))
            .or_default()
            .push(r.scores.f1);
    }
    for ((scenario, p, n, graph, mode), f1) in groups {
        let min = f1.iter().copied().fold(f64::INFINITY, f64::min);
        let max = f1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = f1.iter().sum::<f64>() / f1.len() as f64;
        let blank = String::new;
        w.write_record([
            "summary".to_string(),
            scenario,
            p.to_string(),
            n.to_string(),
            graph.to_string(),
            mode,
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            fmt_f64(min),
            fmt_f64(mean),
            fmt_f64(max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let shared: Option<TruthFile> = args.truth.as_deref().map(read_json).transpose()?;
    let mut rows = Vec::new();
    for (i, dir) in args.estimates.iter().enumerate() {
        let truth = match &shared {
            Some(t) => t.clone(),
            None => read_json(&dir.join(TRUTH_FILE))?,
        };
        let replicate = if args.estimates.len() == 1 { "0".to_string() } else { i.to_string() };
        rows.extend(score_replicate(dir, &truth, args.covariate, replicate)?);
    }
    write_metrics(&rows, &args.out)?;
    for r in &rows {
        eprintln!("{:>3} {:<6} {:<3} F1 = {:.3}", r.replicate, r.graph, r.mode, r.scores.f1);
    }
    Ok(())
}

