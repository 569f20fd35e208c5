//! Undirected conditional graphs from node-wise neighbourhoods.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::funcdata::CovariateDesign;
use crate::neighbours::NodeResult;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SymmetrizationMode {
    #[default]
    Or,
    And,
}

impl fmt::Display for SymmetrizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SymmetrizationMode::Or => "OR",
            SymmetrizationMode::And => "AND",
        })
    }
}

impl FromStr for SymmetrizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "OR" => Ok(SymmetrizationMode::Or),
            "AND" => Ok(SymmetrizationMode::And),
            other => Err(Error::Input(format!("unknown symmetrization mode `{other}`"))),
        }
    }
}

/// Unordered node pair stored as `(min, max)`.
pub type Edge = (usize, usize);

pub fn edge(a: usize, b: usize) -> Edge {
    (a.min(b), a.max(b))
}

pub type EdgeSet = BTreeSet<Edge>;

fn check_results(results: &[NodeResult]) -> Result<()> {
    for (j, r) in results.iter().enumerate() {
        if r.node != j {
            return Err(Error::Aggregation(format!(
                "missing result for node {j} (found node {} in its slot)",
                r.node
            )));
        }
    }
    Ok(())
}

fn symmetrize_sets(sets: &[Vec<usize>], mode: SymmetrizationMode) -> EdgeSet {
    let p = sets.len();
    let has = |j: usize, l: usize| sets[j].binary_search(&l).is_ok();
    let mut out = EdgeSet::new();
    for j in 0..p {
        for l in (j + 1)..p {
            let keep = match mode {
                SymmetrizationMode::Or => has(j, l) || has(l, j),
                SymmetrizationMode::And => has(j, l) && has(l, j),
            };
            if keep {
                out.insert((j, l));
            }
        }
    }
    out
}

/// OR: `(j, l)` iff `l ∈ N̂_j` or `j ∈ N̂_l`; AND requires both.
pub fn symmetrize(results: &[NodeResult], mode: SymmetrizationMode, covariate: usize) -> Result<EdgeSet> {
    check_results(results)?;
    let sets: Vec<Vec<usize>> = results
        .iter()
        .map(|r| r.neighbours.get(covariate).cloned().unwrap_or_default())
        .collect();
    Ok(symmetrize_sets(&sets, mode))
}

/// Weight of a differential edge; infinite for emergent edges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeWeight(pub f64);

impl EdgeWeight {
    pub fn is_emergent(&self) -> bool {
        self.0.is_infinite()
    }
}

/// One-sided selections take the available relative effect; mutual
/// selections take the geometric mean of the two.
pub fn edge_weights(results: &[NodeResult], edges: &EdgeSet, covariate: usize) -> Result<BTreeMap<Edge, EdgeWeight>> {
    if covariate == 0 {
        return Err(Error::Input("edge weights are defined for covariates c >= 1 only".into()));
    }
    check_results(results)?;
    let mut out = BTreeMap::new();
    for &(j, k) in edges {
        let k_in_j = results[j].effect(covariate, k);
        let j_in_k = results[k].effect(covariate, j);
        let w = match (k_in_j, j_in_k) {
            (Some(a), None) => a.value,
            (None, Some(b)) => b.value,
            (Some(a), Some(b)) => (a.value * b.value).sqrt(),
            (None, None) => {
                return Err(Error::Aggregation(format!(
                    "edge ({j}, {k}) selected by neither endpoint"
                )))
            }
        };
        out.insert((j, k), EdgeWeight(w));
    }
    Ok(out)
}

/// Edges of the graph for samples with `x_c = 1`: `k` is a neighbour of `j`
/// when `‖B⁰_k + Bᶜ_k‖_F > ε_j`.
pub fn group_graph(
    results: &[NodeResult],
    design: &CovariateDesign,
    covariate: usize,
    mode: SymmetrizationMode,
) -> Result<EdgeSet> {
    if !design.is_binary(covariate) {
        return Err(Error::Semantics(format!(
            "covariate {covariate} is not a binary group indicator; group graph undefined"
        )));
    }
    check_results(results)?;
    let p = results.len();
    let sets: Vec<Vec<usize>> = results
        .iter()
        .map(|r| {
            (0..p)
                .filter(|&k| k != r.node)
                .filter(|&k| r.combined_norm(covariate, k).is_some_and(|nrm| nrm > r.epsilon))
                .collect()
        })
        .collect();
    Ok(symmetrize_sets(&sets, mode))
}

/// `p x p` symmetric matrix with zero diagonal; binary or weight-valued.
pub fn to_adjacency(edges: &EdgeSet, weights: Option<&BTreeMap<Edge, EdgeWeight>>, p: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(p, p);
    for &(u, v) in edges {
        let w = weights.and_then(|ws| ws.get(&(u, v))).map_or(1.0, |w| w.0);
        a[(u, v)] = w;
        a[(v, u)] = w;
    }
    a
}

/// Estimated graph for one covariate.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub p: usize,
    pub mode: SymmetrizationMode,
    pub covariate: usize,
    /// Differential graphs (`covariate >= 1`) carry a weight on every edge.
    pub edges: BTreeMap<Edge, Option<EdgeWeight>>,
}

impl Graph {
    pub fn edge_set(&self) -> EdgeSet {
        self.edges.keys().copied().collect()
    }

    pub fn adjacency(&self, weighted: bool) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.p, self.p);
        for (&(u, v), w) in &self.edges {
            let val = match (weighted, w) {
                (true, Some(w)) => w.0,
                _ => 1.0,
            };
            a[(u, v)] = val;
            a[(v, u)] = val;
        }
        a
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            p: self.p,
            mode: self.mode,
            covariate: self.covariate,
            edges: self
                .edges
                .iter()
                .map(|(&(u, v), w)| EdgeJson {
                    u,
                    v,
                    weight: w.map(|w| {
                        if w.is_emergent() {
                            WeightJson::Text("inf".into())
                        } else {
                            WeightJson::Number(w.0)
                        }
                    }),
                    emergent: w.map(|w| w.is_emergent()),
                })
                .collect(),
        }
    }

    pub fn from_json(g: &GraphJson) -> Result<Self> {
        let mut edges = BTreeMap::new();
        for e in &g.edges {
            if e.u == e.v || e.u >= g.p || e.v >= g.p {
                return Err(Error::Input(format!("invalid edge ({}, {}) for p = {}", e.u, e.v, g.p)));
            }
            let w = match &e.weight {
                None => None,
                Some(WeightJson::Number(x)) => Some(EdgeWeight(*x)),
                Some(WeightJson::Text(s)) if s == "inf" => Some(EdgeWeight(f64::INFINITY)),
                Some(WeightJson::Text(s)) => return Err(Error::Input(format!("bad edge weight `{s}`"))),
            };
            edges.insert(edge(e.u, e.v), w);
        }
        Ok(Graph {
            p: g.p,
            mode: g.mode,
            covariate: g.covariate,
            edges,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightJson {
    Number(f64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub u: usize,
    pub v: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weight: Option<WeightJson>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub emergent: Option<bool>,
}

/// Serialized graph: `{p, mode, covariate, edges: [{u, v, weight?, emergent?}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub p: usize,
    pub mode: SymmetrizationMode,
    pub covariate: usize,
    pub edges: Vec<EdgeJson>,
}

/// All graphs of one fit: index `c` holds the graph of covariate `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalGraphs {
    pub p: usize,
    pub mode: SymmetrizationMode,
    pub graphs: Vec<Graph>,
}

impl ConditionalGraphs {
    pub fn build(results: &[NodeResult], q: usize, mode: SymmetrizationMode) -> Result<Self> {
        let p = results.len();
        let mut graphs = Vec::with_capacity(q + 1);
        for c in 0..=q {
            let edges = symmetrize(results, mode, c)?;
            let edges = if c == 0 {
                edges.into_iter().map(|e| (e, None)).collect()
            } else {
                let w = edge_weights(results, &edges, c)?;
                edges.into_iter().map(|e| (e, Some(w[&e]))).collect()
            };
            graphs.push(Graph {
                p,
                mode,
                covariate: c,
                edges,
            });
        }
        Ok(ConditionalGraphs { p, mode, graphs })
    }

    pub fn population(&self) -> &Graph {
        &self.graphs[0]
    }
}

/// Adjacency CSV with a header row of node ids; values printed with 17 significant digits.
pub fn write_adjacency_csv<W: Write>(adj: &DMatrix<f64>, node_ids: &[String], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(node_ids)?;
    for i in 0..adj.nrows() {
        let row: Vec<String> = (0..adj.ncols())
            .map(|j| {
                let v = adj[(i, j)];
                if v.is_infinite() { "inf".to_string() } else { fmt_f64(v) }
            })
            .collect();
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
