//! Per-node neighbourhood estimation: selective cross-validation over
//! `(λ, ε)`, thresholded neighbour sets, and relative effects.

use std::collections::HashMap;

use nalgebra::{DMatrix, DMatrixView};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fpca::ScoreTensor;
use crate::funcdata::CovariateDesign;
use crate::linalg::quantile_sorted;
use crate::solver::{
    build_design, refit_from_gram, AdmmOptions, AdmmReport, AdmmState, CoefficientBlocks, DesignMatrix,
    GroupLasso,
};

/// Candidate thresholds for block norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EpsilonGrid {
    /// At each λ: the given quantiles of the non-zero block norms of the
    /// full-data fit, plus one absolute value.
    DataAdaptive { quantiles: Vec<f64>, absolute: f64 },
    Fixed(Vec<f64>),
}

impl EpsilonGrid {
    pub fn len(&self) -> usize {
        match self {
            EpsilonGrid::DataAdaptive { quantiles, .. } => quantiles.len() + 1,
            EpsilonGrid::Fixed(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn candidates(&self, norms: &[f64]) -> Vec<f64> {
        match self {
            EpsilonGrid::Fixed(v) => v.clone(),
            EpsilonGrid::DataAdaptive { quantiles, absolute } => {
                let mut nz: Vec<f64> = norms.iter().copied().filter(|&x| x > 0.0).collect();
                nz.sort_by(f64::total_cmp);
                let mut out: Vec<f64> = quantiles
                    .iter()
                    .map(|&q| if nz.is_empty() { *absolute } else { quantile_sorted(&nz, q) })
                    .collect();
                out.push(*absolute);
                out
            }
        }
    }
}

/// Deciles of the non-zero block norms plus `1e-6`.
impl Default for EpsilonGrid {
    fn default() -> Self {
        EpsilonGrid::DataAdaptive {
            quantiles: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            absolute: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub n_lambda: usize,
    /// Smallest λ on the grid as a fraction of λ_max.
    pub lambda_min_ratio: f64,
    pub epsilon: EpsilonGrid,
    pub folds: usize,
    /// Fraction of `(λ, ε)` pairs scored; 1 means exhaustive search.
    pub search_fraction: f64,
    pub seed: u64,
    pub admm: AdmmOptions,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            n_lambda: 50,
            lambda_min_ratio: 1e-3,
            epsilon: EpsilonGrid::default(),
            folds: 5,
            search_fraction: 1.0,
            seed: 0,
            admm: AdmmOptions::default(),
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambda == 0 || self.epsilon.is_empty() {
            return Err(Error::Input("λ and ε grids need at least one value".into()));
        }
        if !(self.search_fraction > 0.0 && self.search_fraction <= 1.0) {
            return Err(Error::Input(format!(
                "search fraction must lie in (0, 1], got {}",
                self.search_fraction
            )));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio <= 1.0) {
            return Err(Error::Input("λ range factor must lie in (0, 1]".into()));
        }
        if self.folds < 2 {
            return Err(Error::Input("need at least 2 folds".into()));
        }
        if let EpsilonGrid::Fixed(v) = &self.epsilon {
            if v.iter().any(|&e| !(e >= 0.0)) {
                return Err(Error::Input("ε candidates must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Log-spaced grid from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, size: usize, ratio: f64) -> Vec<f64> {
    if size == 1 {
        return vec![lambda_max];
    }
    let lo = ratio.ln();
    (0..size)
        .map(|i| {
            if i == 0 {
                lambda_max
            } else {
                lambda_max * (lo * i as f64 / (size - 1) as f64).exp()
            }
        })
        .collect()
}

/// Random stream reserved for each (node, purpose) pair.
fn node_rng(seed: u64, node: usize, purpose: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((node as u64) << 8) | purpose);
    rng
}

const STREAM_FOLDS: u64 = 1;
const STREAM_SEARCH: u64 = 2;

/// Fold label per sample: contiguous blocks of a seeded permutation, taken
/// separately within each stratum of the dummy covariate columns.
pub fn assign_folds(x: &CovariateDesign, folds: usize, seed: u64, node: usize) -> Result<Vec<usize>> {
    let n = x.n();
    if n < 2 * folds {
        return Err(Error::SampleSize {
            needed: 2 * folds,
            got: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut node_rng(seed, node, STREAM_FOLDS));
    let dummies = x.dummy_columns();
    let stratum = |i: usize| -> Vec<u8> { dummies.iter().map(|&c| (x.value(i, c) != 0.0) as u8).collect() };
    order.sort_by_key(|&i| stratum(i)); // stable: keeps the permutation within strata
    let mut labels = vec![0; n];
    let mut start = 0;
    while start < n {
        let key = stratum(order[start]);
        let mut end = start;
        while end < n && stratum(order[end]) == key {
            end += 1;
        }
        let size = end - start;
        for (r, &i) in order[start..end].iter().enumerate() {
            labels[i] = r * folds / size;
        }
        start = end;
    }
    Ok(labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScvRow {
    pub lambda_index: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub active_blocks: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScvSelection {
    pub lambda_max: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub lambda_index: usize,
    pub table: Vec<ScvRow>,
    /// Set when every candidate produced an empty model.
    pub warning: Option<String>,
    /// Full-data fit at the selected λ.
    pub fit: CoefficientBlocks,
    pub admm: AdmmReport,
}

fn better(a: &ScvRow, b: &ScvRow) -> bool {
    let scale = a.score.abs().max(b.score.abs()).max(1.0);
    if (a.score - b.score).abs() > 1e-12 * scale {
        return a.score < b.score;
    }
    if a.active_blocks != b.active_blocks {
        return a.active_blocks < b.active_blocks;
    }
    if a.lambda != b.lambda {
        return a.lambda > b.lambda;
    }
    a.epsilon > b.epsilon
}

/// Train/test sufficient statistics of one fold.
struct Fold {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    test_z: DMatrix<f64>,
    test_a: DMatrix<f64>,
}

fn build_folds(design: &DesignMatrix, response: &DMatrix<f64>, labels: &[usize], k: usize) -> Vec<Fold> {
    let zt = design.z.transpose();
    let full_gram = &zt * &design.z;
    let full_cross = &zt * response;
    (0..k)
        .map(|nu| {
            let test: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == nu).collect();
            let test_z = design.z.select_rows(&test);
            let test_a = response.select_rows(&test);
            let tzt = test_z.transpose();
            Fold {
                gram: &full_gram - &tzt * &test_z,
                cross: &full_cross - &tzt * &test_a,
                test_z,
                test_a,
            }
        })
        .collect()
}

/// Average SCV-RSS of an active set: restricted refit on each training split,
/// test residual sum of squares plus `log(|test|)·|active|`.
fn scv_score(folds: &[Fold], m: usize, active: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for fold in folds {
        let n_test = fold.test_a.nrows();
        let rss = if active.is_empty() {
            fold.test_a.norm_squared()
        } else {
            let (b, _) = refit_from_gram(&fold.gram, &fold.cross, m, active)?;
            let cols: Vec<usize> = active.iter().flat_map(|&g| g * m..(g + 1) * m).collect();
            (&fold.test_a - fold.test_z.select_columns(&cols) * b).norm_squared()
        };
        total += rss + (n_test as f64).ln() * active.len() as f64;
    }
    Ok(total / folds.len() as f64)
}

/// Selects `(λ*, ε*)` for one node by selective cross-validation.
///
/// Every λ is fitted once on the full data (warm-started down the path); each
/// `(λ, ε)` pair screens the blocks with norm above ε, refits them without
/// penalty on each training split, and is scored on the held-out split.
pub fn scv_select(
    design: &DesignMatrix,
    response: &DMatrix<f64>,
    x: &CovariateDesign,
    cfg: &TuningConfig,
) -> Result<ScvSelection> {
    cfg.validate()?;
    let m = design.m;
    let labels = assign_folds(x, cfg.folds, cfg.seed, design.target)?;
    let problem = GroupLasso::new(design, response, cfg.admm.rho)?;
    let lmax = problem.lambda_max()?;
    let lambdas = lambda_grid(lmax, cfg.n_lambda, cfg.lambda_min_ratio);

    // Regularization path with warm starts.
    let mut fits: Vec<(DMatrix<f64>, AdmmReport)> = Vec::with_capacity(lambdas.len());
    let mut state: Option<AdmmState> = None;
    for &lam in &lambdas {
        let (coef, next, report) = problem.solve(lam, &cfg.admm, state.as_ref(), None)?;
        fits.push((coef, report));
        state = Some(next);
    }

    let block_norms: Vec<Vec<f64>> = fits
        .iter()
        .map(|(b, _)| (0..design.groups.len()).map(|g| b.rows(g * m, m).norm()).collect())
        .collect();
    let mut pairs: Vec<(usize, f64)> = Vec::new();
    for (l, norms) in block_norms.iter().enumerate() {
        for eps in cfg.epsilon.candidates(norms) {
            pairs.push((l, eps));
        }
    }
    if cfg.search_fraction < 1.0 {
        let keep = ((cfg.search_fraction * pairs.len() as f64).ceil() as usize).clamp(1, pairs.len());
        let mut rng = node_rng(cfg.seed, design.target, STREAM_SEARCH);
        let mut picked = rand::seq::index::sample(&mut rng, pairs.len(), keep).into_vec();
        picked.sort_unstable();
        pairs = picked.into_iter().map(|i| pairs[i]).collect();
    }

    let folds = build_folds(design, response, &labels, cfg.folds);
    let mut memo: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut table = Vec::with_capacity(pairs.len());
    for (l, eps) in pairs {
        let active: Vec<usize> = (0..design.groups.len()).filter(|&g| block_norms[l][g] > eps).collect();
        let score = match memo.get(&active) {
            Some(&s) => s,
            None => {
                let s = scv_score(&folds, m, &active)?;
                memo.insert(active.clone(), s);
                s
            }
        };
        table.push(ScvRow {
            lambda_index: l,
            lambda: lambdas[l],
            epsilon: eps,
            active_blocks: active.len(),
            score,
        });
    }

    let best = table
        .iter()
        .skip(1)
        .fold(&table[0], |best, row| if better(row, best) { row } else { best })
        .clone();
    let warning = table
        .iter()
        .all(|r| r.active_blocks == 0)
        .then(|| "every candidate model is empty; returning the largest λ".to_string());
    let (coef, admm) = fits.swap_remove(best.lambda_index);
    Ok(ScvSelection {
        lambda_max: lmax,
        lambda: best.lambda,
        epsilon: best.epsilon,
        lambda_index: best.lambda_index,
        table,
        warning,
        fit: CoefficientBlocks {
            target: design.target,
            m,
            groups: design.groups.clone(),
            coef,
        },
        admm,
    })
}

/// `N̂^c = {k ≠ j : ‖B_k^c‖_F > ε}` for `c = 0..=q`, each sorted by node.
pub fn threshold_neighbours(blocks: &CoefficientBlocks, epsilon: f64) -> Vec<Vec<usize>> {
    let q1 = blocks.groups.iter().map(|g| g.covariate + 1).max().unwrap_or(1);
    let mut sets = vec![Vec::new(); q1];
    for (g, key) in blocks.groups.iter().enumerate() {
        if blocks.block_norm(g) > epsilon {
            sets[key.covariate].push(key.node);
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    sets
}

/// `‖B⁰ + Bᶜ‖_F / ‖B⁰‖_F`; infinite (an emergent edge) when the baseline block is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeEffect {
    pub value: f64,
}

impl RelativeEffect {
    pub fn is_emergent(&self) -> bool {
        self.value.is_infinite()
    }

    pub fn log10(&self) -> Option<f64> {
        (!self.is_emergent()).then(|| self.value.log10())
    }
}

impl Serialize for RelativeEffect {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("RelativeEffect", 3)?;
        if self.is_emergent() {
            st.serialize_field("eff", "inf")?;
        } else {
            st.serialize_field("eff", &self.value)?;
        }
        st.serialize_field("log10_eff", &self.log10())?;
        st.serialize_field("emergent", &self.is_emergent())?;
        st.end()
    }
}

pub fn relative_effect(baseline: DMatrixView<'_, f64>, modifier: DMatrixView<'_, f64>) -> RelativeEffect {
    let base = baseline.norm();
    if base == 0.0 {
        return RelativeEffect { value: f64::INFINITY };
    }
    RelativeEffect {
        value: (baseline + modifier).norm() / base,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NeighbourEffect {
    pub node: usize,
    #[serde(flatten)]
    pub effect: RelativeEffect,
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeResult {
    pub node: usize,
    pub m: usize,
    pub lambda_max: f64,
    pub lambda: f64,
    pub epsilon: f64,
    /// `neighbours[c]`: selected nodes for covariate `c`, ascending.
    pub neighbours: Vec<Vec<usize>>,
    /// `effects[c - 1]`: relative effects of `neighbours[c]`, for `c >= 1`.
    pub effects: Vec<Vec<NeighbourEffect>>,
    pub block_norms: Vec<f64>,
    pub blocks: CoefficientBlocks,
    pub admm: AdmmReport,
    pub scv_table: Vec<ScvRow>,
    pub warning: Option<String>,
}

impl NodeResult {
    pub fn contains(&self, covariate: usize, node: usize) -> bool {
        self.neighbours
            .get(covariate)
            .is_some_and(|s| s.binary_search(&node).is_ok())
    }

    pub fn effect(&self, covariate: usize, node: usize) -> Option<RelativeEffect> {
        if covariate == 0 {
            return None;
        }
        self.effects
            .get(covariate - 1)?
            .iter()
            .find(|e| e.node == node)
            .map(|e| e.effect)
    }

    /// Frobenius norm of `B⁰_k + Bᶜ_k`, the coefficient seen by samples with `x_c = 1`.
    pub fn combined_norm(&self, covariate: usize, node: usize) -> Option<f64> {
        let g0 = self.blocks.find(0, node)?;
        let gc = self.blocks.find(covariate, node)?;
        Some((self.blocks.block(g0) + self.blocks.block(gc)).norm())
    }
}

/// Neighbour sets and relative effects for given coefficients and threshold.
pub fn summarize_node(blocks: &CoefficientBlocks, epsilon: f64) -> (Vec<Vec<usize>>, Vec<Vec<NeighbourEffect>>) {
    let neighbours = threshold_neighbours(blocks, epsilon);
    let effects = neighbours
        .iter()
        .enumerate()
        .skip(1)
        .map(|(c, set)| {
            set.iter()
                .map(|&k| {
                    let g0 = blocks.find(0, k).expect("baseline block exists for every regressor");
                    let gc = blocks.find(c, k).expect("covariate block exists for every regressor");
                    NeighbourEffect {
                        node: k,
                        effect: relative_effect(blocks.block(g0), blocks.block(gc)),
                    }
                })
                .collect()
        })
        .collect();
    (neighbours, effects)
}

/// Design, SCV tuning, thresholding and relative effects for the target node
/// of `scores`.
pub fn fit_node(scores: &ScoreTensor, x: &CovariateDesign, cfg: &TuningConfig) -> Result<NodeResult> {
    let node = scores.target;
    let run = || -> Result<NodeResult> {
        let (design, response) = build_design(scores, x)?;
        let sel = scv_select(&design, &response, x, cfg)?;
        let (neighbours, effects) = summarize_node(&sel.fit, sel.epsilon);
        Ok(NodeResult {
            node,
            m: scores.m,
            lambda_max: sel.lambda_max,
            lambda: sel.lambda,
            epsilon: sel.epsilon,
            neighbours,
            effects,
            block_norms: sel.fit.norms(),
            blocks: sel.fit,
            admm: sel.admm,
            scv_table: sel.table,
            warning: sel.warning,
        })
    };
    run().map_err(|e| e.at_node(node))
}
