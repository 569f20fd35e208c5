//! Edge-recovery scores over the upper triangle of the adjacency matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{Edge, EdgeSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn check(edges: &EdgeSet, p: usize, what: &str) -> Result<()> {
    match edges.iter().find(|&&(a, b)| a == b || a >= p || b >= p) {
        Some(&(a, b)) => Err(Error::Input(format!("{what} edge ({a}, {b}) is a self-loop or outside 0..{p}"))),
        None => Ok(()),
    }
}

/// Counts over the `p(p−1)/2` unordered node pairs. Edges are normalized
/// so `(a, b)` and `(b, a)` are the same pair.
pub fn confusion(estimated: &EdgeSet, truth: &EdgeSet, p: usize) -> Result<ConfusionCounts> {
    check(estimated, p, "estimated")?;
    check(truth, p, "true")?;
    let norm = |s: &EdgeSet| -> EdgeSet { s.iter().map(|&(a, b)| crate::graphs::edge(a, b)).collect() };
    let (est, tru) = (norm(estimated), norm(truth));
    let tp = est.intersection(&tru).count();
    let fp = est.len() - tp;
    let fn_ = tru.len() - tp;
    let pairs = p * p.saturating_sub(1) / 2;
    Ok(ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: pairs - tp - fp - fn_,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// Empty estimate against empty truth scores 1 on precision, TPR and F1.
/// An empty estimate against a nonempty truth has precision 0. FPR with no
/// negatives is 0.
pub fn scores(c: &ConfusionCounts) -> Scores {
    let nothing_to_find = c.tp + c.fn_ == 0;
    let precision = ratio(c.tp, c.tp + c.fp, if nothing_to_find { 1.0 } else { 0.0 });
    let tpr = ratio(c.tp, c.tp + c.fn_, 1.0);
    let fpr = ratio(c.fp, c.fp + c.tn, 0.0);
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, 1.0);
    Scores { precision, tpr, fpr, f1 }
}

pub fn evaluate(estimated: &EdgeSet, truth: &EdgeSet, p: usize) -> Result<(ConfusionCounts, Scores)> {
    let c = confusion(estimated, truth, p)?;
    Ok((c, scores(&c)))
}

/// Applies a node permutation to every edge.
pub fn relabel(edges: &EdgeSet, perm: &[usize]) -> EdgeSet {
    edges.iter().map(|&(a, b): &Edge| crate::graphs::edge(perm[a], perm[b])).collect()
}
