//! Synthetic two-group functional data from block-banded precision matrices.
//!
//! Scores for all `p` nodes are drawn jointly from `N(0, (Θ⁰ + x Θ¹)⁻¹)`,
//! where `x ∈ {0, 1}` is the group, and mapped to curves through the first
//! `M*` Fourier functions plus white observation noise.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSystem;
use crate::error::{Error, Result};
use crate::funcdata::{encode_covariates, CovariateDesign, FunctionalDataset, RawCovariates, Series, VariableKind, VariableSpec};
use crate::graphs::{edge, EdgeSet};
use crate::linalg::min_eigenvalue;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4, Scenario::S5, Scenario::S6];
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Input(format!("unknown scenario `{s}` (expected S1..S6)")))
    }
}

/// `T_vw = 0.5^|v−w|`.
pub fn toeplitz_block(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |v, w| 0.5f64.powi((v as i32 - w as i32).abs()))
}

/// Tridiagonal with unit diagonal and 0.5 on the first off-diagonals.
pub fn tridiagonal_block(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |v, w| match v.abs_diff(w) {
        0 => 1.0,
        1 => 0.5,
        _ => 0.0,
    })
}

/// Block-banded template: `T` on the diagonal, `0.4 A` one block off it,
/// `0.2 I` two blocks off it. Not positive definite for larger `p·M*`
/// (e.g. `p = 10, M* = 15`); [`scenario_pair`] repairs it before use.
pub fn block_precision_template(p: usize, m: usize) -> Result<DMatrix<f64>> {
    if p < 3 {
        return Err(Error::Generation(format!("need p >= 3 nodes, got {p}")));
    }
    if m == 0 {
        return Err(Error::Generation("need at least one basis function".into()));
    }
    let t = toeplitz_block(m);
    let a = tridiagonal_block(m) * 0.4;
    let i2 = DMatrix::<f64>::identity(m, m) * 0.2;
    let mut theta = DMatrix::zeros(p * m, p * m);
    for k in 0..p {
        for j in 0..p {
            let block = match k.abs_diff(j) {
                0 => &t,
                1 => &a,
                2 => &i2,
                _ => continue,
            };
            theta.view_mut((k * m, j * m), (m, m)).copy_from(block);
        }
    }
    Ok(theta)
}

/// Precision matrices of the two groups.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionPair {
    pub p: usize,
    pub m: usize,
    pub scenario: Option<Scenario>,
    /// Reference-group precision Θ⁰.
    pub theta0: DMatrix<f64>,
    /// Differential part Θ¹; the second group has precision Θ⁰ + Θ¹.
    pub theta1: DMatrix<f64>,
    /// Diagonal shifts applied to restore positive definiteness.
    pub repairs: Vec<String>,
}

impl PrecisionPair {
    pub fn group1(&self) -> DMatrix<f64> {
        &self.theta0 + &self.theta1
    }

    /// Both groups' precisions share the template (no scenario edits).
    pub fn unmodified(theta: DMatrix<f64>, p: usize, m: usize) -> Self {
        let d = theta.nrows();
        PrecisionPair {
            p,
            m,
            scenario: None,
            theta0: theta,
            theta1: DMatrix::zeros(d, d),
            repairs: Vec::new(),
        }
    }
}

/// 0-based node indices of a 1-based inclusive window, clipped to `[1, p]`.
fn window(lo: usize, hi: usize, p: usize) -> Vec<usize> {
    (lo.max(1)..=hi.min(p)).map(|v| v - 1).collect()
}

fn zero_offdiag(theta: &mut DMatrix<f64>, nodes: &[usize], m: usize) {
    for &k in nodes {
        for &j in nodes {
            if k != j {
                theta.view_mut((k * m, j * m), (m, m)).fill(0.0);
            }
        }
    }
}

fn scale_offdiag(theta: &mut DMatrix<f64>, template: &DMatrix<f64>, nodes: &[usize], m: usize, s: f64) {
    for &k in nodes {
        for &j in nodes {
            if k != j {
                let block = template.view((k * m, j * m), (m, m)) * s;
                theta.view_mut((k * m, j * m), (m, m)).copy_from(&block);
            }
        }
    }
}

fn repair(theta: &mut DMatrix<f64>, label: &str, log: &mut Vec<String>) {
    let lo = min_eigenvalue(theta);
    if lo < 1e-8 {
        let shift = lo.abs() + 0.01;
        let d = theta.nrows();
        *theta += DMatrix::identity(d, d) * shift;
        log.push(format!("{label}: min eigenvalue {lo:e}, added {shift:e} to the diagonal"));
    }
}

/// Applies a scenario's edits to copies of the template and returns
/// `Θ⁰` and `Θ¹ = (Θ⁰ + Θ¹) − Θ⁰`. Only off-diagonal blocks are edited.
pub fn apply_scenario(theta: &DMatrix<f64>, scenario: Scenario, p: usize, m: usize) -> Result<PrecisionPair> {
    if theta.nrows() != p * m || theta.ncols() != p * m {
        return Err(Error::Dimension(format!("template is {}x{}, expected {}", theta.nrows(), theta.ncols(), p * m)));
    }
    let third = p / 3;
    let half = p / 2;
    let first_third = window(1, third, p);
    let mut g0 = theta.clone();
    let mut g1 = theta.clone();
    match scenario {
        Scenario::S1 => zero_offdiag(&mut g0, &first_third, m),
        Scenario::S2 => zero_offdiag(&mut g1, &first_third, m),
        Scenario::S3 => {
            zero_offdiag(&mut g0, &first_third, m);
            zero_offdiag(&mut g1, &window(p - third + 1, p, p), m);
        }
        Scenario::S4 => {
            zero_offdiag(&mut g0, &window(1, half + 1, p), m);
            zero_offdiag(&mut g1, &window(p - half, p, p), m);
        }
        Scenario::S5 => scale_offdiag(&mut g0, theta, &first_third, m, 0.25),
        Scenario::S6 => scale_offdiag(&mut g1, theta, &first_third, m, 0.25),
    }
    let mut repairs = Vec::new();
    repair(&mut g0, "group 0 precision", &mut repairs);
    repair(&mut g1, "group 1 precision", &mut repairs);
    let theta1 = &g1 - &g0;
    Ok(PrecisionPair {
        p,
        m,
        scenario: Some(scenario),
        theta0: g0,
        theta1,
        repairs,
    })
}

/// Template, diagonally shifted if needed, with the scenario applied.
pub fn scenario_pair(scenario: Scenario, p: usize, m: usize) -> Result<PrecisionPair> {
    let mut theta = block_precision_template(p, m)?;
    let mut log = Vec::new();
    repair(&mut theta, "template", &mut log);
    let mut pair = apply_scenario(&theta, scenario, p, m)?;
    log.append(&mut pair.repairs);
    pair.repairs = log;
    Ok(pair)
}

/// Edge supports read off the off-diagonal block norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueGraphs {
    pub p: usize,
    pub scenario: Option<Scenario>,
    /// Support of Θ⁰ (population network).
    pub g0: EdgeSet,
    /// Support of Θ¹ (differential network).
    pub g1: EdgeSet,
    /// Support of Θ⁰ + Θ¹ (second group's network).
    pub group1: EdgeSet,
}

fn block_support(theta: &DMatrix<f64>, p: usize, m: usize) -> EdgeSet {
    let mut out = EdgeSet::new();
    for k in 0..p {
        for j in (k + 1)..p {
            if theta.view((k * m, j * m), (m, m)).norm() > 1e-12 {
                out.insert(edge(k, j));
            }
        }
    }
    out
}

pub fn true_graphs(pair: &PrecisionPair) -> TrueGraphs {
    TrueGraphs {
        p: pair.p,
        scenario: pair.scenario,
        g0: block_support(&pair.theta0, pair.p, pair.m),
        g1: block_support(&pair.theta1, pair.p, pair.m),
        group1: block_support(&pair.group1(), pair.p, pair.m),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_per_group: usize,
    /// Number of equally spaced observation times in (0, 1].
    pub time_points: usize,
    pub noise_variance: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_per_group: 100,
            time_points: 100,
            noise_variance: 0.5,
            seed: 0,
        }
    }
}

/// Draws from `N(0, Θ⁻¹)` by solving `Lᵀ α = z` against the Cholesky factor `Θ = LLᵀ`.
pub struct PrecisionSampler {
    l_transpose: DMatrix<f64>,
}

impl PrecisionSampler {
    pub fn new(theta: &DMatrix<f64>) -> Result<Self> {
        let chol = theta
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Generation("precision matrix factorization failed".into()))?;
        Ok(PrecisionSampler {
            l_transpose: chol.l().transpose(),
        })
    }

    pub fn dim(&self) -> usize {
        self.l_transpose.nrows()
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        self.l_transpose
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal")
    }
}

/// Independent random stream for sample `i`.
pub fn sample_rng(seed: u64, sample: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(sample as u64);
    rng
}

/// Group label of sample `i`: the first `n_per_group` samples are the reference group.
pub fn group_of(sample: usize, n_per_group: usize) -> usize {
    usize::from(sample >= n_per_group)
}

/// Joint score vectors (`pM*` entries, node-major) for every sample.
pub fn sample_scores(pair: &PrecisionPair, cfg: &SimulationConfig) -> Result<Vec<DVector<f64>>> {
    let samplers = [PrecisionSampler::new(&pair.theta0)?, PrecisionSampler::new(&pair.group1())?];
    Ok((0..2 * cfg.n_per_group)
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, i);
            samplers[group_of(i, cfg.n_per_group)].sample(&mut rng)
        })
        .collect())
}

/// Simulated observations: functions plus the encoded group covariate.
pub struct SimulatedData {
    pub dataset: FunctionalDataset,
    pub raw_covariates: RawCovariates,
    pub design: CovariateDesign,
    pub truth: TrueGraphs,
}

pub fn node_id(k: usize, p: usize) -> String {
    let width = p.to_string().len().max(2);
    format!("n{:0width$}", k + 1)
}

pub fn sample_id(i: usize, n: usize) -> String {
    let width = n.to_string().len().max(3);
    format!("s{:0width$}", i + 1)
}

/// Generates `2 · n_per_group` samples observed at `time_points` equally
/// spaced times with Gaussian noise of the configured variance.
pub fn sample_dataset(pair: &PrecisionPair, cfg: &SimulationConfig) -> Result<SimulatedData> {
    if cfg.n_per_group == 0 || cfg.time_points == 0 {
        return Err(Error::Generation("need at least one sample per group and one time point".into()));
    }
    if !(cfg.noise_variance >= 0.0) {
        return Err(Error::Generation("noise variance must be >= 0".into()));
    }
    let (p, m) = (pair.p, pair.m);
    let n = 2 * cfg.n_per_group;
    let times: Vec<f64> = (1..=cfg.time_points).map(|k| k as f64 / cfg.time_points as f64).collect();
    let f = BasisSystem::fourier(m, (0.0, 1.0))?.eval(&times)?;
    let samplers = [PrecisionSampler::new(&pair.theta0)?, PrecisionSampler::new(&pair.group1())?];
    let noise = Normal::new(0.0, cfg.noise_variance.sqrt()).map_err(|e| Error::Generation(e.to_string()))?;

    let draw = |i: usize| -> Vec<Series> {
        let mut rng = sample_rng(cfg.seed, i);
        let alpha = samplers[group_of(i, cfg.n_per_group)].sample(&mut rng);
        (0..p)
            .map(|k| {
                let signal = &f * alpha.rows(k * m, m);
                let values = signal.iter().map(|s| s + noise.sample(&mut rng)).collect();
                Series::new(times.clone(), values)
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let series: Vec<Vec<Series>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(draw).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let series: Vec<Vec<Series>> = (0..n).map(draw).collect();
    let sample_ids: Vec<String> = (0..n).map(|i| sample_id(i, n)).collect();
    let node_ids: Vec<String> = (0..p).map(|k| node_id(k, p)).collect();
    let dataset = FunctionalDataset::from_series(sample_ids.clone(), node_ids, series)?;
    let raw = RawCovariates {
        sample_ids,
        names: vec!["group".into()],
        cells: (0..n).map(|i| vec![format!("g{}", group_of(i, cfg.n_per_group))]).collect(),
    };
    let design = encode_covariates(
        &raw,
        &[VariableSpec {
            name: "group".into(),
            kind: VariableKind::Categorical {
                reference: "g0".into(),
                levels: Some(vec!["g0".into(), "g1".into()]),
            },
        }],
    )?;
    Ok(SimulatedData {
        dataset,
        raw_covariates: raw,
        design,
        truth: true_graphs(pair),
    })
}
