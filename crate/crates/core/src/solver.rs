//! Group-lasso penalized vector-on-vector regression solved by ADMM.
//!
//! For a target node the response is the `n x M` score matrix `A` and the
//! design `Z` stacks, for every covariate `c` and every other node `k`, the
//! block `x_{i,c} a_{i,k}ᵀ`. The estimator minimizes
//!
//! ```text
//! (1/2n) ‖A − Z B‖²_F + λ Σ_g ‖B_g‖_F
//! ```
//!
//! over `B` (one `M x M` block per group) with the splitting `P = Q`:
//! a ridge solve for `Q`, block soft-thresholding for `P`, and a scaled dual `U`.
//!
//! Block `g` of the coefficient matrix maps node `k`'s scores to the target's
//! scores as a row-vector product, so it is the transpose of the usual
//! column-vector coefficient `B_k^c`. Frobenius norms and relative effects are
//! unaffected.

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::ScoreTensor;
use crate::funcdata::CovariateDesign;
use crate::linalg::checked_cholesky;

/// Identifies a coefficient block: covariate `c` (0 = intercept) and regressor node `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub covariate: usize,
    pub node: usize,
}

/// `Z = 𝒜 ∗ 𝒳` with its group layout: covariate-major, then regressor node.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    pub z: DMatrix<f64>,
    pub m: usize,
    pub target: usize,
    pub groups: Vec<GroupKey>,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn group_columns(&self, g: usize) -> DMatrixView<'_, f64> {
        self.z.columns(g * self.m, self.m)
    }
}

/// Builds the design for `scores.target` and returns it with the response
/// (the target's own scores).
pub fn build_design(scores: &ScoreTensor, x: &CovariateDesign) -> Result<(DesignMatrix, DMatrix<f64>)> {
    let n = scores.n();
    let p = scores.p();
    let m = scores.m;
    let j = scores.target;
    if x.n() != n {
        return Err(Error::Dimension(format!("{} covariate rows for {n} samples", x.n())));
    }
    if j >= p {
        return Err(Error::Dimension(format!("target node {j} out of range for p = {p}")));
    }
    if scores.scores.iter().any(|s| s.nrows() != n || s.ncols() != m) {
        return Err(Error::Dimension("score matrices have inconsistent shapes".into()));
    }
    let q1 = x.q() + 1;
    let mut groups = Vec::with_capacity(q1 * (p - 1));
    for c in 0..q1 {
        for k in (0..p).filter(|&k| k != j) {
            groups.push(GroupKey { covariate: c, node: k });
        }
    }
    let mut z = DMatrix::zeros(n, groups.len() * m);
    for (g, key) in groups.iter().enumerate() {
        let a = &scores.scores[key.node];
        for i in 0..n {
            let xi = x.value(i, key.covariate);
            for col in 0..m {
                z[(i, g * m + col)] = xi * a[(i, col)];
            }
        }
    }
    let response = scores.scores[j].clone();
    Ok((
        DesignMatrix {
            z,
            m,
            target: j,
            groups,
        },
        response,
    ))
}

/// Stacked coefficient blocks, laid out like the design's groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBlocks {
    pub target: usize,
    pub m: usize,
    pub groups: Vec<GroupKey>,
    /// `(groups * M) x M`.
    pub coef: DMatrix<f64>,
}

impl CoefficientBlocks {
    pub fn zeros(target: usize, m: usize, groups: Vec<GroupKey>) -> Self {
        let d = groups.len() * m;
        CoefficientBlocks {
            target,
            m,
            groups,
            coef: DMatrix::zeros(d, m),
        }
    }

    pub fn block(&self, g: usize) -> DMatrixView<'_, f64> {
        self.coef.rows(g * self.m, self.m)
    }

    pub fn find(&self, covariate: usize, node: usize) -> Option<usize> {
        self.groups.iter().position(|k| k.covariate == covariate && k.node == node)
    }

    pub fn block_norm(&self, g: usize) -> f64 {
        self.block(g).norm()
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.groups.len()).map(|g| self.block_norm(g)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coef.iter().all(|&v| v == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmmOptions {
    pub rho: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            rho: 1.0,
            tol_abs: 1e-5,
            tol_rel: 1e-4,
            max_iter: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmmReport {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub converged: bool,
}

/// Iterate pair carried between fits along a λ path.
#[derive(Clone, Debug)]
pub struct AdmmState {
    pub p: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

/// `max(0, 1 − κ/‖V‖_F) V`.
pub fn block_soft_threshold(v: &DMatrix<f64>, kappa: f64) -> DMatrix<f64> {
    let mut out = v.clone();
    shrink_in_place(&mut out.as_view_mut(), kappa);
    out
}

fn shrink_in_place(v: &mut nalgebra::DMatrixViewMut<'_, f64>, kappa: f64) {
    let norm = v.norm();
    if norm <= kappa {
        v.fill(0.0);
    } else if kappa > 0.0 {
        *v *= 1.0 - kappa / norm;
    }
}

/// Sufficient statistics of one node's regression plus the cached ADMM
/// factorization `(ZᵀZ/n + ρI)⁻¹`, shared by every λ on the path.
pub struct GroupLasso {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    response_ss: f64,
    m: usize,
    rho: f64,
    inverse: DMatrix<f64>,
    inverse_cross: DMatrix<f64>,
}

impl GroupLasso {
    pub fn new(design: &DesignMatrix, response: &DMatrix<f64>, rho: f64) -> Result<Self> {
        let n = design.n();
        if response.nrows() != n || response.ncols() != design.m {
            return Err(Error::Dimension(format!(
                "response is {}x{}, expected {n}x{}",
                response.nrows(),
                response.ncols(),
                design.m
            )));
        }
        if !(rho > 0.0) {
            return Err(Error::Input(format!("ADMM penalty must be positive, got {rho}")));
        }
        let nf = n as f64;
        let zt = design.z.transpose();
        let gram = &zt * &design.z / nf;
        let cross = &zt * response / nf;
        let response_ss = response.norm_squared() / (2.0 * nf);
        let d = gram.nrows();
        let shifted = &gram + DMatrix::identity(d, d) * rho;
        let chol = checked_cholesky(shifted, 0.0)
            .ok_or_else(|| Error::Numerical("ADMM system not positive definite".into()))?;
        let inverse = chol.inverse();
        let inverse_cross = &inverse * &cross;
        Ok(GroupLasso {
            gram,
            cross,
            response_ss,
            m: design.m,
            rho,
            inverse,
            inverse_cross,
        })
    }

    pub fn groups(&self) -> usize {
        self.gram.nrows() / self.m
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    /// `max_g ‖Z_gᵀ A‖_F / n`; the solution is identically zero for λ at or above it.
    pub fn lambda_max(&self) -> Result<f64> {
        if self.response_ss == 0.0 {
            return Err(Error::Degenerate("response is identically zero".into()));
        }
        Ok((0..self.groups())
            .map(|g| self.cross.rows(g * self.m, self.m).norm())
            .fold(0.0, f64::max))
    }

    /// `(1/2n)‖A − ZB‖² + λ Σ ‖B_g‖`, evaluated through the Gram matrix.
    pub fn objective(&self, b: &DMatrix<f64>, lambda: f64) -> f64 {
        let gb = &self.gram * b;
        let quad = 0.5 * b.dot(&gb) - b.dot(&self.cross) + self.response_ss;
        let pen: f64 = (0..self.groups()).map(|g| b.rows(g * self.m, self.m).norm()).sum();
        quad.max(0.0) + lambda * pen
    }

    /// Gradient of the smooth term, `(ZᵀZ B − ZᵀA)/n`.
    pub fn gradient(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        &self.gram * b - &self.cross
    }

    /// Largest KKT violation over zero blocks (`‖∇_g‖ − λ`, clipped at 0) and
    /// over non-zero blocks (`‖∇_g + λ B_g/‖B_g‖‖`).
    pub fn kkt_violation(&self, b: &DMatrix<f64>, lambda: f64) -> (f64, f64) {
        let grad = self.gradient(b);
        let mut zero_viol = 0.0_f64;
        let mut active_viol = 0.0_f64;
        for g in 0..self.groups() {
            let bg = b.rows(g * self.m, self.m);
            let gg = grad.rows(g * self.m, self.m);
            let nb = bg.norm();
            if nb == 0.0 {
                zero_viol = zero_viol.max(gg.norm() - lambda);
            } else {
                active_viol = active_viol.max((gg + bg * (lambda / nb)).norm());
            }
        }
        (zero_viol.max(0.0), active_viol)
    }

    pub fn zero_state(&self) -> AdmmState {
        let d = self.gram.nrows();
        AdmmState {
            p: DMatrix::zeros(d, self.m),
            u: DMatrix::zeros(d, self.m),
        }
    }

    /// Runs ADMM from `start` (or from zero). `trace`, when given, receives the
    /// objective at each iterate `P`.
    pub fn solve(
        &self,
        lambda: f64,
        opts: &AdmmOptions,
        start: Option<&AdmmState>,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<(DMatrix<f64>, AdmmState, AdmmReport)> {
        if !(lambda >= 0.0) {
            return Err(Error::Input(format!("penalty must be >= 0, got {lambda}")));
        }
        if (opts.rho - self.rho).abs() > 0.0 {
            return Err(Error::Input("ADMM options use a different rho than the factorization".into()));
        }
        let rho = self.rho;
        let kappa = lambda / rho;
        let m = self.m;
        let ngroups = self.groups();
        let dim = (self.gram.nrows() * m) as f64;
        let mut state = start.cloned().unwrap_or_else(|| self.zero_state());
        let mut q;
        let mut work = DMatrix::zeros(self.gram.nrows(), m);
        let mut report = AdmmReport {
            iterations: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            objective: f64::NAN,
            converged: false,
        };
        for it in 1..=opts.max_iter {
            // Q ← (G + ρI)⁻¹ (c + ρ(P − U))
            work.copy_from(&state.p);
            work -= &state.u;
            q = self.inverse_cross.clone();
            q.gemm(rho, &self.inverse, &work, 1.0);

            // P ← S_{λ/ρ}(Q + U), blockwise
            let p_old = std::mem::replace(&mut state.p, &q + &state.u);
            for g in 0..ngroups {
                shrink_in_place(&mut state.p.rows_mut(g * m, m), kappa);
            }
            // U ← U + Q − P
            state.u += &q;
            state.u -= &state.p;

            let r = (&q - &state.p).norm();
            let s = rho * (&state.p - &p_old).norm();
            if !(r.is_finite() && s.is_finite()) {
                return Err(Error::Numerical(format!("non-finite ADMM iterate at iteration {it}")));
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(&state.p, lambda));
            }
            let eps_pri = dim.sqrt() * opts.tol_abs + opts.tol_rel * q.norm().max(state.p.norm());
            let eps_dual = dim.sqrt() * opts.tol_abs + opts.tol_rel * rho * state.u.norm();
            report.iterations = it;
            report.primal_residual = r;
            report.dual_residual = s;
            if r <= eps_pri && s <= eps_dual {
                report.converged = true;
                break;
            }
        }
        report.objective = self.objective(&state.p, lambda);
        Ok((state.p.clone(), state, report))
    }
}

/// Largest penalty with a non-zero solution: `max_g ‖Z_gᵀ A‖_F / n`.
pub fn lambda_max(design: &DesignMatrix, response: &DMatrix<f64>) -> Result<f64> {
    if response.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("response is identically zero".into()));
    }
    let n = design.n() as f64;
    Ok((0..design.groups.len())
        .map(|g| (design.group_columns(g).transpose() * response).norm() / n)
        .fold(0.0, f64::max))
}

/// One-shot group-lasso fit; see [`GroupLasso`] to reuse the factorization.
pub fn admm_group_lasso(
    design: &DesignMatrix,
    response: &DMatrix<f64>,
    lambda: f64,
    opts: &AdmmOptions,
) -> Result<(CoefficientBlocks, AdmmReport)> {
    let problem = GroupLasso::new(design, response, opts.rho)?;
    let (coef, _, report) = problem.solve(lambda, opts, None, None)?;
    Ok((
        CoefficientBlocks {
            target: design.target,
            m: design.m,
            groups: design.groups.clone(),
            coef,
        },
        report,
    ))
}

/// Diagnostics of an unpenalized refit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefitReport {
    pub active_columns: usize,
    /// True when the active design was rank-deficient and a 1e-8 ridge was added.
    pub ridge_used: bool,
}

pub(crate) const REFIT_RIDGE: f64 = 1e-8;

/// Least squares restricted to `active` groups, from precomputed
/// `ZᵀZ` and `ZᵀA` (any common scaling). Returns the stacked active
/// coefficients in the order of `active`.
pub(crate) fn refit_from_gram(
    gram: &DMatrix<f64>,
    cross: &DMatrix<f64>,
    m: usize,
    active: &[usize],
) -> Result<(DMatrix<f64>, bool)> {
    let cols: Vec<usize> = active.iter().flat_map(|&g| g * m..(g + 1) * m).collect();
    let sub = gram.select_rows(&cols).select_columns(&cols);
    let rhs = cross.select_rows(&cols);
    if let Some(chol) = checked_cholesky(sub.clone(), 1e-12) {
        return Ok((chol.solve(&rhs), false));
    }
    let d = cols.len();
    let scale = sub.diagonal().iter().copied().fold(0.0_f64, f64::max).max(1.0);
    let ridged = sub + DMatrix::identity(d, d) * (REFIT_RIDGE * scale);
    let chol = checked_cholesky(ridged, 0.0)
        .ok_or_else(|| Error::Numerical("ridge-stabilized refit failed".into()))?;
    Ok((chol.solve(&rhs), true))
}

/// Unpenalized least squares using only the columns of `active` groups;
/// inactive blocks are exactly zero.
pub fn restricted_least_squares(
    design: &DesignMatrix,
    response: &DMatrix<f64>,
    active: &[usize],
) -> Result<(CoefficientBlocks, RefitReport)> {
    let mut out = CoefficientBlocks::zeros(design.target, design.m, design.groups.clone());
    if active.is_empty() {
        return Ok((
            out,
            RefitReport {
                active_columns: 0,
                ridge_used: false,
            },
        ));
    }
    if let Some(&g) = active.iter().find(|&&g| g >= design.groups.len()) {
        return Err(Error::Dimension(format!("active group {g} out of range")));
    }
    let m = design.m;
    let cols: Vec<usize> = active.iter().flat_map(|&g| g * m..(g + 1) * m).collect();
    let za = design.z.select_columns(&cols);
    let gram = za.transpose() * &za;
    let cross = za.transpose() * response;
    let all: Vec<usize> = (0..active.len()).collect();
    let (b, ridge_used) = refit_from_gram(&gram, &cross, m, &all)?;
    for (slot, &g) in active.iter().enumerate() {
        out.coef.rows_mut(g * m, m).copy_from(&b.rows(slot * m, m));
    }
    Ok((
        out,
        RefitReport {
            active_columns: cols.len(),
            ridge_used,
        },
    ))
}
