//! On-disk formats written and read by the subcommands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use condfgm::funcdata::ColumnMeta;
use condfgm::graphs::{Graph, GraphJson};
use condfgm::simgen::{Scenario, TrueGraphs};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TRUTH_FILE: &str = "truth.json";
pub const FUNCTIONS_FILE: &str = "functions.csv";
pub const COVARIATES_FILE: &str = "covariates.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const NODE_RESULTS_FILE: &str = "node_results.json";

pub fn graph_file(c: usize) -> String {
    format!("graph_c{c}.json")
}

pub fn group_graph_file(c: usize) -> String {
    format!("group_c{c}.json")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    /// Baseline network, `c = 0`.
    Population,
    /// Edges modulated by covariate `c >= 1`.
    Differential,
    /// Network of the samples with binary covariate `c` switched on.
    Group,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphFile {
    pub kind: GraphKind,
    pub covariate_name: String,
    pub node_ids: Vec<String>,
    #[serde(flatten)]
    pub graph: GraphJson,
}

impl GraphFile {
    pub fn new(kind: GraphKind, covariate_name: String, node_ids: &[String], graph: &Graph) -> Self {
        GraphFile {
            kind,
            covariate_name,
            node_ids: node_ids.to_vec(),
            graph: graph.to_json(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

pub fn column_name(meta: &ColumnMeta) -> String {
    match meta {
        ColumnMeta::Intercept => "intercept".into(),
        ColumnMeta::Continuous { variable } => variable.clone(),
        ColumnMeta::Dummy { variable, level, .. } => format!("{variable}={level}"),
    }
}

/// Ground truth emitted by `simulate`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub scenario: Scenario,
    pub p: usize,
    pub m_star: usize,
    pub n_per_group: usize,
    pub time_points: usize,
    pub noise_variance: f64,
    pub seed: u64,
    pub node_ids: Vec<String>,
    /// Diagonal shifts applied to keep the precision matrices positive definite.
    pub repairs: Vec<String>,
    pub graphs: TrueGraphs,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}
