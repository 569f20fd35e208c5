use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use condfgm::funcdata::{
    encode_covariates, load_covariates_csv, load_functional_csv, validate, CsvSchema, Severity, VariableKind,
};
use condfgm::graphs::{write_adjacency_csv, Graph};
use condfgm::pipeline::{fit, FitOutput};
use condfgm::{CovariateDesign, FunctionalDataset};
use serde::Serialize;

use crate::config::RunConfig;
use crate::files::{
    column_name, create, graph_file, group_graph_file, sha256_file, write_json, GraphFile, GraphKind, MANIFEST_FILE,
    NODE_RESULTS_FILE,
};
use crate::FitArgs;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: Vec<String>,
    config: &'a RunConfig,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    n: usize,
    p: usize,
    q: usize,
    m: usize,
    node_m: &'a [usize],
    covariates: Vec<String>,
    timings_ms: BTreeMap<&'static str, u128>,
}

pub fn load_design(ds: &FunctionalDataset, covariates: Option<&Path>, references: &[String]) -> Result<CovariateDesign> {
    let Some(path) = covariates else {
        return Ok(CovariateDesign::intercept_only(ds.n()));
    };
    let raw = load_covariates_csv(path)?.aligned(ds.sample_ids())?;
    let mut specs = raw.infer_specs();
    for r in references {
        let (var, level) = r
            .split_once('=')
            .with_context(|| format!("--reference expects variable=level, got `{r}`"))?;
        let Some(spec) = specs.iter_mut().find(|s| s.name == var) else {
            bail!("--reference names unknown covariate `{var}`");
        };
        match &mut spec.kind {
            VariableKind::Categorical { reference, .. } => *reference = level.to_string(),
            VariableKind::Continuous => bail!("covariate `{var}` is numeric; it has no reference level"),
        }
    }
    Ok(encode_covariates(&raw, &specs)?)
}

/// Writes graph JSON and adjacency CSVs for every covariate, plus group graphs.
pub fn write_graphs(out: &FitOutput, x: &CovariateDesign, dir: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();
    for g in &out.graphs.graphs {
        let c = g.covariate;
        let kind = if c == 0 { GraphKind::Population } else { GraphKind::Differential };
        let name = graph_file(c);
        write_json(&dir.join(&name), &GraphFile::new(kind, column_name(&x.columns()[c]), &out.node_ids, g))?;
        let csv = format!("adjacency_c{c}.csv");
        write_adjacency_csv(&g.adjacency(c > 0), &out.node_ids, create(&dir.join(&csv))?)?;
        written.extend([name, csv]);
    }
    for gg in &out.group_graphs {
        let graph = Graph {
            p: out.graphs.p,
            mode: out.graphs.mode,
            covariate: gg.covariate,
            edges: gg.edges.iter().map(|&e| (e, None)).collect(),
        };
        let name = group_graph_file(gg.covariate);
        let file = GraphFile::new(GraphKind::Group, column_name(&x.columns()[gg.covariate]), &out.node_ids, &graph);
        write_json(&dir.join(&name), &file)?;
        written.push(name);
    }
    Ok(written)
}

pub fn run(args: &FitArgs) -> Result<()> {
    let cfg = args.tuning.resolve()?;
    let t0 = Instant::now();
    let ds = load_functional_csv(&args.functions, &CsvSchema::default())?;
    let report = validate(&ds);
    for issue in &report.issues {
        eprintln!("{:?}: {}: {}", issue.severity, issue.location, issue.message);
    }
    if report.has_errors() {
        bail!(
            "input validation failed ({} errors); nothing was fitted",
            report.issues.iter().filter(|i| i.severity == Severity::Error).count()
        );
    }
    let x = load_design(&ds, args.covariates.as_deref(), &args.references)?;
    let load_ms = t0.elapsed().as_millis();

    let t1 = Instant::now();
    let out = fit(&ds, &x, &cfg.fit, cfg.threads)?;
    let fit_ms = t1.elapsed().as_millis();
    for r in &out.node_results {
        if let Some(w) = &r.warning {
            eprintln!("warning: node {}: {w}", out.node_ids[r.node]);
        }
        if !r.admm.converged {
            eprintln!("warning: node {}: ADMM stopped at the iteration limit", out.node_ids[r.node]);
        }
    }

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut written = write_graphs(&out, &x, &args.out)?;
    write_json(&args.out.join(NODE_RESULTS_FILE), &out.node_results)?;
    written.push(NODE_RESULTS_FILE.to_string());

    let mut inputs = BTreeMap::new();
    inputs.insert(args.functions.display().to_string(), sha256_file(&args.functions)?);
    if let Some(c) = &args.covariates {
        inputs.insert(c.display().to_string(), sha256_file(c)?);
    }
    let outputs = written
        .iter()
        .map(|name| Ok((name.clone(), sha256_file(&args.out.join(name))?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let manifest = Manifest {
        tool: "condfgm",
        version: env!("CARGO_PKG_VERSION"),
        command: std::env::args().collect(),
        config: &cfg,
        inputs,
        outputs,
        n: ds.n(),
        p: ds.p(),
        q: x.q(),
        m: out.m,
        node_m: &out.node_m,
        covariates: x.columns().iter().map(column_name).collect(),
        timings_ms: [("load", load_ms), ("fit", fit_ms)].into_iter().collect(),
    };
    write_json(&args.out.join(MANIFEST_FILE), &manifest)?;
    eprintln!(
        "fitted n = {}, p = {}, q = {}, M = {} in {:.1}s; |G0| = {}",
        ds.n(),
        ds.p(),
        x.q(),
        out.m,
        fit_ms as f64 / 1000.0,
        out.graphs.population().edges.len()
    );
    Ok(())
}
