//! Node-specific FPCA bases, truncation by explained variance, and projection
//! scores.
//!
//! For a target node `j` the eigenfunctions of node `j`'s covariance operator
//! are used to score the curves of *every* node, so all regressors entering
//! node `j`'s regression share one representation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::trapezoid_weights;
use crate::error::{Error, Result};
use crate::linalg::{max_asymmetry, sorted_symmetric_eigen};

/// Evaluation grid plus quadrature weights shared by all curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub grid: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// `size` equally spaced points `a + k(b−a)/size`, `k = 1..=size`, with
    /// trapezoid weights; the uncovered stretch `[a, t_1]` is credited to the
    /// first point.
    pub fn uniform(size: usize, domain: (f64, f64)) -> Self {
        let (a, b) = domain;
        let grid: Vec<f64> = (1..=size).map(|k| a + (b - a) * k as f64 / size as f64).collect();
        let mut weights = trapezoid_weights(&grid);
        if let Some(w0) = weights.first_mut() {
            *w0 += grid[0] - a;
        }
        Quadrature { grid, weights }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
    }
}

/// Smoothed curves of every node evaluated on a common quadrature grid.
#[derive(Clone, Debug)]
pub struct GridCurves {
    pub quadrature: Quadrature,
    /// One `n x G` matrix per node.
    pub values: Vec<DMatrix<f64>>,
    /// Cross-sample mean function of each node.
    pub means: Vec<DVector<f64>>,
}

impl GridCurves {
    pub fn new(quadrature: Quadrature, values: Vec<DMatrix<f64>>) -> Result<Self> {
        let g = quadrature.len();
        if let Some(bad) = values.iter().find(|v| v.ncols() != g) {
            return Err(Error::Dimension(format!(
                "curve matrix has {} grid columns, quadrature has {g}",
                bad.ncols()
            )));
        }
        let means = values.iter().map(column_means).collect();
        Ok(GridCurves {
            quadrature,
            values,
            means,
        })
    }

    pub fn p(&self) -> usize {
        self.values.len()
    }

    pub fn n(&self) -> usize {
        self.values.first().map_or(0, |v| v.nrows())
    }
}

fn column_means(values: &DMatrix<f64>) -> DVector<f64> {
    let n = values.nrows().max(1) as f64;
    DVector::from_iterator(values.ncols(), values.column_iter().map(|c| c.sum() / n))
}

/// Sample mean and covariance (divisor `n − 1`) of curves stored row-wise.
pub fn estimate_covariance(values: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = values.nrows();
    if n < 2 {
        return Err(Error::SampleSize { needed: 2, got: n });
    }
    let mean = column_means(values);
    let mut centered = values.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.transpose() * &centered / (n - 1) as f64;
    // exact symmetry; the product is symmetric up to rounding only
    for i in 0..cov.nrows() {
        for j in (i + 1)..cov.ncols() {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    Ok((mean, cov))
}

/// Orthonormal eigenbasis of one node's covariance operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeBasis {
    pub node: usize,
    /// `G x M`, one eigenfunction per column.
    pub eigenfunctions: DMatrix<f64>,
    /// Non-increasing, non-negative.
    pub eigenvalues: DVector<f64>,
    pub weights: Vec<f64>,
    pub mean: DVector<f64>,
}

impl NodeBasis {
    /// FPCA of `values` (`n x G`, one curve per row) for node `node`.
    pub fn estimate(node: usize, values: &DMatrix<f64>, quad: &Quadrature, m_max: usize) -> Result<Self> {
        let (mean, cov) = estimate_covariance(values)?;
        let mut basis = fpca_basis(&cov, quad, m_max)?;
        basis.node = node;
        basis.mean = mean;
        Ok(basis)
    }

    pub fn m(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Keeps the leading `m` eigenpairs.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.m());
        NodeBasis {
            node: self.node,
            eigenfunctions: self.eigenfunctions.columns(0, m).into_owned(),
            eigenvalues: self.eigenvalues.rows(0, m).into_owned(),
            weights: self.weights.clone(),
            mean: self.mean.clone(),
        }
    }

    /// Largest deviation of the quadrature Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.m();
        let mut worst = 0.0_f64;
        for a in 0..m {
            for b in a..m {
                let g: f64 = (0..self.weights.len())
                    .map(|i| self.weights[i] * self.eigenfunctions[(i, a)] * self.eigenfunctions[(i, b)])
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - want).abs());
            }
        }
        worst
    }
}

/// Eigenpairs of the covariance operator `(Cf)(s) = ∫ C(s,t) f(t) dt`
/// discretized with quadrature weights `W`.
///
/// Solves the symmetric problem `W^½ C W^½ u = λ u` and returns
/// `φ = W^{-½} u`, which has unit norm under the quadrature. Each
/// eigenfunction is signed so its first non-negligible weighted component is
/// positive.
pub fn fpca_basis(cov: &DMatrix<f64>, quad: &Quadrature, m_max: usize) -> Result<NodeBasis> {
    let g = quad.len();
    if cov.nrows() != g || cov.ncols() != g {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, quadrature has {g} points",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let asym = max_asymmetry(cov);
    if asym > 1e-8 {
        return Err(Error::Input(format!("covariance not symmetric (max deviation {asym:e})")));
    }
    if quad.weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Input("quadrature weights must be positive".into()));
    }
    let sqrt_w: Vec<f64> = quad.weights.iter().map(|w| w.sqrt()).collect();
    let scaled = DMatrix::from_fn(g, g, |i, j| sqrt_w[i] * cov[(i, j)] * sqrt_w[j]);
    let (vals, vecs) = sorted_symmetric_eigen(scaled);
    let m = m_max.min(g);
    let top = vals[0].max(0.0);
    let eigenvalues = DVector::from_iterator(
        m,
        vals.iter().take(m).map(|&v| if v > 1e-12 * top { v } else { 0.0 }),
    );
    let mut eigenfunctions = DMatrix::zeros(g, m);
    for c in 0..m {
        let u = vecs.column(c);
        let umax = u.amax();
        let first = u.iter().position(|x| x.abs() > 1e-8 * umax).unwrap_or(0);
        let sign = if u[first] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..g {
            eigenfunctions[(i, c)] = sign * u[i] / sqrt_w[i];
        }
    }
    Ok(NodeBasis {
        node: 0,
        eigenfunctions,
        eigenvalues,
        weights: quad.weights.clone(),
        mean: DVector::zeros(g),
    })
}

/// Smallest `M` whose leading eigenvalues explain at least `pve` of the total
/// variance, capped at `m_max`.
pub fn select_truncation(eigenvalues: &[f64], pve: f64, m_max: usize) -> Result<usize> {
    if !(pve > 0.0 && pve <= 1.0) {
        return Err(Error::Input(format!("explained-variance threshold must lie in (0, 1], got {pve}")));
    }
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("all eigenvalues are zero; node has no variance".into()));
    }
    let target = pve * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for (m, &v) in eigenvalues.iter().enumerate() {
        cum += v.max(0.0);
        if cum >= target {
            return Ok((m + 1).min(m_max.max(1)));
        }
    }
    Ok(eigenvalues.len().min(m_max.max(1)))
}

/// Projection scores `a_{i,k,m}` of every node's curves on one node's basis.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTensor {
    pub target: usize,
    pub m: usize,
    /// `scores[k]` is the `n x M` score matrix of node `k`.
    pub scores: Vec<DMatrix<f64>>,
}

impl ScoreTensor {
    pub fn n(&self) -> usize {
        self.scores.first().map_or(0, |s| s.nrows())
    }

    pub fn p(&self) -> usize {
        self.scores.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        ScoreTensor {
            target: self.target,
            m: self.m,
            scores: self.scores.iter().map(|s| s.select_rows(rows)).collect(),
        }
    }
}

/// `a_{i,k,m} = ⟨y_{i,k} − μ_k, φ_m⟩` by quadrature, for the first `m`
/// eigenfunctions of `basis`. Each node is centred with its own mean.
pub fn project_scores(curves: &GridCurves, basis: &NodeBasis, m: usize) -> Result<ScoreTensor> {
    let g = curves.quadrature.len();
    if basis.eigenfunctions.nrows() != g || basis.weights.len() != g {
        return Err(Error::Dimension(format!(
            "basis defined on {} points, curves on {g}",
            basis.eigenfunctions.nrows()
        )));
    }
    if m > basis.m() {
        return Err(Error::Dimension(format!("requested {m} scores from a basis of size {}", basis.m())));
    }
    let phi = basis.eigenfunctions.columns(0, m);
    let weighted = DMatrix::from_fn(g, m, |i, c| basis.weights[i] * phi[(i, c)]);
    let scores = curves
        .values
        .iter()
        .zip(&curves.means)
        .map(|(y, mu)| {
            let mut s = y * &weighted;
            let offset = mu.transpose() * &weighted;
            for mut row in s.row_iter_mut() {
                row -= &offset;
            }
            s
        })
        .collect();
    Ok(ScoreTensor {
        target: basis.node,
        m,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSystem;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn fourier_on(quad: &Quadrature, r: usize) -> DMatrix<f64> {
        BasisSystem::fourier(r, (0.0, 1.0)).unwrap().eval(&quad.grid).unwrap()
    }

    #[test]
    fn identical_curves_zero_covariance() {
        let row = DVector::from_fn(20, |i, _| (i as f64).sin());
        let values = DMatrix::from_fn(5, 20, |_, j| row[j]);
        let (_, cov) = estimate_covariance(&values).unwrap();
        assert!(cov.amax() < 1e-15);
    }

    #[test]
    fn plus_minus_curve_is_rank_one() {
        let f = DVector::from_fn(10, |i, _| 1.0 + i as f64);
        let values = DMatrix::from_fn(2, 10, |i, j| if i == 0 { f[j] } else { -f[j] });
        let (mean, cov) = estimate_covariance(&values).unwrap();
        assert!(mean.amax() < 1e-15);
        // two samples ±f: covariance = 2 f fᵀ / (2 − 1)
        let want = &f * f.transpose() * 2.0;
        assert!((cov - want).amax() < 1e-12);
    }

    #[test]
    fn covariance_needs_two_samples() {
        let values = DMatrix::zeros(1, 4);
        assert!(matches!(estimate_covariance(&values), Err(Error::SampleSize { .. })));
    }

    #[test]
    fn monte_carlo_covariance_matches_model() {
        let quad = Quadrature::uniform(50, (0.0, 1.0));
        let phi = fourier_on(&quad, 3);
        let sd = [2.0, 1.0, 0.5];
        let n = 5000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scores = DMatrix::from_fn(n, 3, |_, c| sd[c] * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let values = &scores * phi.transpose();
        let (_, cov) = estimate_covariance(&values).unwrap();
        let sigma = DMatrix::from_diagonal(&DVector::from_iterator(3, sd.iter().map(|s| s * s)));
        let want = &phi * sigma * phi.transpose();
        // sampling error of a variance estimate is ~ sqrt(2/n) relative
        let tol = 5.0 * (2.0 / n as f64).sqrt() * want.amax();
        assert!((cov - want).amax() < tol);
    }

    #[test]
    fn diagonal_operator_eigenvalues() {
        let quad = Quadrature {
            grid: vec![0.0, 1.0, 2.0],
            weights: vec![1.0; 3],
        };
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 1.0]));
        let b = fpca_basis(&cov, &quad, 3).unwrap();
        assert_eq!(b.eigenvalues.as_slice(), &[3.0, 2.0, 1.0]);
        assert!(b.orthonormality_error() < 1e-12);
    }

    #[test]
    fn constructed_spectrum_recovered() {
        let quad = Quadrature::uniform(100, (0.0, 1.0));
        // orthonormalize Fourier columns under the quadrature so Φ is exactly orthonormal
        let raw = fourier_on(&quad, 4);
        let sw = DMatrix::from_diagonal(&DVector::from_iterator(100, quad.weights.iter().map(|w| w.sqrt())));
        let q = (&sw * raw).qr().q();
        let sw_inv = sw.map(|x| if x > 0.0 { 1.0 / x } else { 0.0 });
        let phi = sw_inv * q;
        let lam = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 3.0, 2.0, 1.0]));
        let cov = &phi * lam * phi.transpose();
        let b = fpca_basis(&cov, &quad, 4).unwrap();
        for (got, want) in b.eigenvalues.iter().zip([4.0, 3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        for c in 0..4 {
            let dot = quad.inner(
                b.eigenfunctions.column(c).as_slice(),
                phi.column(c).as_slice(),
            );
            assert!((dot.abs() - 1.0).abs() < 1e-6, "column {c}: {dot}");
        }
        assert!(b.orthonormality_error() < 1e-6);
    }

    #[test]
    fn zero_covariance_zero_eigenvalues() {
        let quad = Quadrature::uniform(10, (0.0, 1.0));
        let b = fpca_basis(&DMatrix::zeros(10, 10), &quad, 5).unwrap();
        assert!(b.eigenvalues.iter().all(|&v| v == 0.0));
        assert!(matches!(
            select_truncation(b.eigenvalues.as_slice(), 0.9, 5),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn asymmetric_input_rejected() {
        let quad = Quadrature::uniform(2, (0.0, 1.0));
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(fpca_basis(&cov, &quad, 2), Err(Error::Input(_))));
    }

    #[test]
    fn truncation_rule() {
        let ev = [3.0, 2.0, 1.0];
        assert_eq!(select_truncation(&ev, 0.5, 10).unwrap(), 1);
        assert_eq!(select_truncation(&ev, 0.9, 10).unwrap(), 3);
        assert_eq!(select_truncation(&ev, 0.8, 10).unwrap(), 2);
        assert_eq!(select_truncation(&[3.0, 2.0, 0.0, 0.0], 1.0, 10).unwrap(), 2);
        assert_eq!(select_truncation(&ev, 0.9, 2).unwrap(), 2);
    }

    fn random_curves(n: usize, quad: &Quadrature, seed: u64) -> DMatrix<f64> {
        let phi = fourier_on(quad, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = DMatrix::from_fn(n, 7, |_, c| {
            let s: f64 = StandardNormal.sample(&mut rng);
            s / (1.0 + c as f64) + if c == 0 { 0.5 } else { 0.0 }
        });
        scores * phi.transpose()
    }

    #[test]
    fn scores_of_eigenfunction_plus_mean() {
        let quad = Quadrature::uniform(60, (0.0, 1.0));
        let values = random_curves(40, &quad, 5);
        let basis = NodeBasis::estimate(0, &values, &quad, 5).unwrap();
        let mut probe = DMatrix::zeros(2, 60);
        for g in 0..60 {
            probe[(0, g)] = basis.eigenfunctions[(g, 1)] + basis.mean[g];
            probe[(1, g)] = basis.mean[g];
        }
        let curves = GridCurves {
            quadrature: quad.clone(),
            values: vec![probe],
            means: vec![basis.mean.clone()],
        };
        let s = project_scores(&curves, &basis, 5).unwrap();
        for m in 0..5 {
            let want = if m == 1 { 1.0 } else { 0.0 };
            assert!((s.scores[0][(0, m)] - want).abs() < 1e-9);
            assert!(s.scores[0][(1, m)].abs() < 1e-12);
        }
    }

    #[test]
    fn full_rank_reconstruction() {
        let quad = Quadrature::uniform(30, (0.0, 1.0));
        let mut values = random_curves(50, &quad, 9);
        let mean = column_means(&values);
        for mut row in values.row_iter_mut() {
            row -= mean.transpose();
        }
        let basis = NodeBasis::estimate(0, &values, &quad, 30).unwrap();
        let curves = GridCurves::new(quad.clone(), vec![values.clone()]).unwrap();
        let s = project_scores(&curves, &basis, 30).unwrap();
        let recon = &s.scores[0] * basis.eigenfunctions.transpose();
        assert!((recon - values).amax() < 1e-6);
    }

    #[test]
    fn reconstruction_error_non_increasing_in_m() {
        let quad = Quadrature::uniform(40, (0.0, 1.0));
        let values = random_curves(80, &quad, 21);
        let basis = NodeBasis::estimate(0, &values, &quad, 10).unwrap();
        let curves = GridCurves::new(quad.clone(), vec![values.clone()]).unwrap();
        let mut centered = values.clone();
        for mut row in centered.row_iter_mut() {
            row -= basis.mean.transpose();
        }
        let mut last = f64::INFINITY;
        for m in 1..=10 {
            let s = project_scores(&curves, &basis, m).unwrap();
            let recon = &s.scores[0] * basis.eigenfunctions.columns(0, m).transpose();
            let err: f64 = (&centered - recon).iter().map(|x| x * x).sum();
            assert!(err <= last + 1e-9);
            last = err;
        }
    }

    #[test]
    fn own_scores_have_eigenvalue_covariance() {
        let quad = Quadrature::uniform(40, (0.0, 1.0));
        let values = random_curves(300, &quad, 2);
        let basis = NodeBasis::estimate(0, &values, &quad, 4).unwrap();
        let curves = GridCurves::new(quad, vec![values]).unwrap();
        let s = project_scores(&curves, &basis, 4).unwrap();
        let a = &s.scores[0];
        let cov = a.transpose() * a / (a.nrows() - 1) as f64;
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == c { basis.eigenvalues[r] } else { 0.0 };
                assert!((cov[(r, c)] - want).abs() < 1e-8 * (1.0 + basis.eigenvalues[0]));
            }
        }
    }

    #[test]
    fn grid_mismatch_is_dimension_error() {
        let quad = Quadrature::uniform(10, (0.0, 1.0));
        let values = random_curves(5, &quad, 1);
        let basis = NodeBasis::estimate(0, &values, &quad, 3).unwrap();
        let other = GridCurves::new(Quadrature::uniform(12, (0.0, 1.0)), vec![DMatrix::zeros(5, 12)]).unwrap();
        assert!(matches!(project_scores(&other, &basis, 3), Err(Error::Dimension(_))));
    }
}
