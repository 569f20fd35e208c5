#![allow(dead_code)]

use condfgm::fpca::ScoreTensor;
use condfgm::funcdata::ColumnMeta;
use condfgm::graphs::SymmetrizationMode;
use condfgm::metrics;
use condfgm::pipeline::{self, FitConfig};
use condfgm::simgen::{sample_dataset, sample_scores, scenario_pair, true_graphs, Scenario, SimulationConfig};
use condfgm::solver::{build_design, DesignMatrix};
use condfgm::CovariateDesign;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct OracleInstance {
    pub design: DesignMatrix,
    pub response: DMatrix<f64>,
    pub lambda: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, rng)
}

/// Random node-wise problem with n = 60, p = 4, M = 3 and one binary covariate.
pub fn oracle_instance(seed: u64) -> OracleInstance {
    let (n, p, m) = (60, 4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores: Vec<DMatrix<f64>> = (0..p).map(|_| DMatrix::from_fn(n, m, |_, _| normal(&mut rng))).collect();
    // Make the target depend on two regressors so the solution is not trivial.
    let signal = &scores[1] * 0.8 - &scores[2] * 0.5;
    scores[0] += signal;
    let x = DMatrix::from_fn(n, 2, |i, c| if c == 0 { 1.0 } else { (i % 2) as f64 });
    let design = CovariateDesign::from_matrix(
        x,
        vec![
            ColumnMeta::Intercept,
            ColumnMeta::Dummy {
                variable: "group".into(),
                level: "b".into(),
                reference: "a".into(),
            },
        ],
    )
    .unwrap();
    let tensor = ScoreTensor { target: 0, m, scores };
    let (design, response) = build_design(&tensor, &design).unwrap();
    let lmax = direct_lambda_max(&design, &response);
    let lambda = lmax * (0.05 + 0.4 * (seed % 7) as f64 / 6.0);
    OracleInstance { design, response, lambda }
}

pub fn direct_lambda_max(d: &DesignMatrix, a: &DMatrix<f64>) -> f64 {
    let n = d.n() as f64;
    (0..d.groups.len())
        .map(|g| (d.z.columns(g * d.m, d.m).transpose() * a).norm() / n)
        .fold(0.0, f64::max)
}

/// `(1/2n)‖A − ZB‖² + λ Σ ‖B_g‖`, computed from the residual directly.
pub fn direct_objective(d: &DesignMatrix, a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> f64 {
    let n = d.n() as f64;
    let r = a - &d.z * b;
    let pen: f64 = (0..d.groups.len()).map(|g| b.rows(g * d.m, d.m).norm()).sum();
    r.norm_squared() / (2.0 * n) + lambda * pen
}

/// Accelerated proximal gradient run until successive iterates differ by
/// less than `tol` (relative).
pub fn proximal_gradient(d: &DesignMatrix, a: &DMatrix<f64>, lambda: f64, tol: f64) -> DMatrix<f64> {
    let n = d.n() as f64;
    let m = d.m;
    let zt = d.z.transpose();
    let lipschitz = (&zt * &d.z / n).symmetric_eigenvalues().max();
    let step = 1.0 / lipschitz;
    let mut b = DMatrix::zeros(d.z.ncols(), m);
    let mut y = b.clone();
    let mut t = 1.0_f64;
    for _ in 0..1_000_000 {
        let grad = &zt * (&d.z * &y - a) / n;
        let mut next = &y - grad * step;
        for g in 0..d.groups.len() {
            let mut blk = next.rows_mut(g * m, m);
            let norm = blk.norm();
            let scale = if norm <= lambda * step { 0.0 } else { 1.0 - lambda * step / norm };
            blk *= scale;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + (&next - &b) * ((t - 1.0) / t_next);
        let change = (&next - &b).norm() / b.norm().max(1.0);
        b = next;
        t = t_next;
        if change < tol {
            break;
        }
    }
    b
}

/// Largest KKT violation over zero blocks and over non-zero blocks.
pub fn kkt_residuals(d: &DesignMatrix, a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> (f64, f64) {
    let n = d.n() as f64;
    let r = a - &d.z * b;
    let mut zero = 0.0_f64;
    let mut active = 0.0_f64;
    for g in 0..d.groups.len() {
        let zr = d.z.columns(g * d.m, d.m).transpose() * &r / n;
        let bg = b.rows(g * d.m, d.m);
        let nb = bg.norm();
        if nb == 0.0 {
            zero = zero.max(zr.norm() - lambda);
        } else {
            active = active.max((zr - bg * (lambda / nb)).norm());
        }
    }
    (zero.max(0.0), active)
}

/// Entrywise comparison of the empirical covariance of group-0 score draws
/// with the explicit inverse of Θ⁰. Returns (worst |dev|/se, entries beyond 3 se, entries).
pub fn generator_check(draws: usize, seed: u64) -> (f64, usize, usize) {
    let pair = scenario_pair(Scenario::S3, 4, 3).unwrap();
    let cfg = SimulationConfig {
        n_per_group: draws,
        seed,
        ..SimulationConfig::default()
    };
    let all = sample_scores(&pair, &cfg).unwrap();
    let d = pair.theta0.nrows();
    let mut emp = DMatrix::<f64>::zeros(d, d);
    for a in all.iter().take(draws) {
        emp += a * a.transpose();
    }
    emp /= draws as f64;
    let sigma = pair.theta0.clone().try_inverse().unwrap();
    let (mut worst, mut beyond, mut count) = (0.0_f64, 0, 0);
    for i in 0..d {
        for j in i..d {
            let se = ((sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2)) / draws as f64).sqrt();
            let z = (emp[(i, j)] - sigma[(i, j)]).abs() / se;
            worst = worst.max(z);
            beyond += usize::from(z > 3.0);
            count += 1;
        }
    }
    (worst, beyond, count)
}

#[derive(Clone, Copy, Debug)]
pub struct ReplicateF1 {
    pub g0_or: f64,
    pub g1_or: f64,
    pub g1_and: f64,
}

/// Simulates one replicate with p = 10 and the default fit configuration,
/// scoring OR graphs and the AND re-symmetrization of the same node fits.
pub fn replicate_f1(scenario: Scenario, n_per_group: usize, seed: u64) -> ReplicateF1 {
    let p = 10;
    let pair = scenario_pair(scenario, p, 15).unwrap();
    let truth = true_graphs(&pair);
    let sim = sample_dataset(
        &pair,
        &SimulationConfig {
            n_per_group,
            seed,
            ..SimulationConfig::default()
        },
    )
    .unwrap();
    let cfg = FitConfig::default();
    let out = pipeline::fit(&sim.dataset, &sim.design, &cfg, 0).unwrap();
    let f1 = |est, truth| metrics::evaluate(est, truth, p).unwrap().1.f1;
    let (and_graphs, _) = pipeline::resymmetrize(&out, &sim.design, SymmetrizationMode::And).unwrap();
    ReplicateF1 {
        g0_or: f1(&out.graphs.graphs[0].edge_set(), &truth.g0),
        g1_or: f1(&out.graphs.graphs[1].edge_set(), &truth.g1),
        g1_and: f1(&and_graphs.graphs[1].edge_set(), &truth.g1),
    }
}

pub fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn unit_vector(d: usize, i: usize) -> DVector<f64> {
    DVector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 })
}
