//! Fixed basis systems and penalized least-squares smoothing of discrete curves.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sorted_symmetric_eigen;

const DOMAIN_SLACK: f64 = 1e-12;
/// Internal quadrature size for the roughness penalty.
const PENALTY_GRID: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BasisSystem {
    /// Constant, then sin/cos pairs of increasing frequency, each with unit
    /// L² norm on the domain.
    Fourier { size: usize, domain: (f64, f64) },
    /// B-splines of the given order (4 = cubic) on a clamped knot vector.
    BSpline {
        order: usize,
        knots: Vec<f64>,
        domain: (f64, f64),
    },
}

impl BasisSystem {
    pub fn fourier(size: usize, domain: (f64, f64)) -> Result<Self> {
        if size == 0 {
            return Err(Error::Input("basis size must be at least 1".into()));
        }
        if !(domain.1 > domain.0) {
            return Err(Error::Input("empty basis domain".into()));
        }
        Ok(BasisSystem::Fourier { size, domain })
    }

    /// `size` B-splines of order `order` with equally spaced interior knots.
    pub fn bspline(size: usize, order: usize, domain: (f64, f64)) -> Result<Self> {
        if order == 0 || size < order {
            return Err(Error::Input(format!(
                "B-spline basis needs size >= order (size {size}, order {order})"
            )));
        }
        if !(domain.1 > domain.0) {
            return Err(Error::Input("empty basis domain".into()));
        }
        let (a, b) = domain;
        let interior = size - order;
        let mut knots = vec![a; order];
        for i in 1..=interior {
            knots.push(a + (b - a) * i as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(b, order));
        Ok(BasisSystem::BSpline {
            order,
            knots,
            domain,
        })
    }

    pub fn size(&self) -> usize {
        match self {
            BasisSystem::Fourier { size, .. } => *size,
            BasisSystem::BSpline { order, knots, .. } => knots.len() - order,
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        match self {
            BasisSystem::Fourier { domain, .. } | BasisSystem::BSpline { domain, .. } => *domain,
        }
    }

    fn check_grid(&self, grid: &[f64]) -> Result<()> {
        let (lo, hi) = self.domain();
        let slack = DOMAIN_SLACK * (hi - lo).max(1.0);
        match grid.iter().find(|&&t| !(t >= lo - slack && t <= hi + slack)) {
            Some(&time) => Err(Error::Domain { time, lo, hi }),
            None => Ok(()),
        }
    }

    /// `|grid| x R` matrix of basis values; column `r` holds ψ_r on the grid.
    pub fn eval(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        self.eval_derivative(grid, 0)
    }

    /// Same as [`eval`](Self::eval) for the `deriv`-th derivative.
    pub fn eval_derivative(&self, grid: &[f64], deriv: usize) -> Result<DMatrix<f64>> {
        self.check_grid(grid)?;
        let r = self.size();
        let mut out = DMatrix::zeros(grid.len(), r);
        match self {
            BasisSystem::Fourier { domain, .. } => {
                let (a, b) = *domain;
                let len = b - a;
                let c0 = 1.0 / len.sqrt();
                let c1 = (2.0 / len).sqrt();
                for (g, &t) in grid.iter().enumerate() {
                    out[(g, 0)] = if deriv == 0 { c0 } else { 0.0 };
                    for col in 1..r {
                        let k = col.div_ceil(2) as f64;
                        let omega = 2.0 * PI * k / len;
                        let x = omega * (t - a);
                        // d^n/dx^n of sin is sin(x + nπ/2); cos(x) = sin(x + π/2).
                        let phase = if col % 2 == 1 { 0.0 } else { PI / 2.0 };
                        out[(g, col)] = c1
                            * omega.powi(deriv as i32)
                            * (x + phase + deriv as f64 * PI / 2.0).sin();
                    }
                }
            }
            BasisSystem::BSpline { order, knots, .. } => {
                for (g, &t) in grid.iter().enumerate() {
                    let vals = bspline_values(knots, *order, t, deriv);
                    for (col, v) in vals.into_iter().enumerate() {
                        out[(g, col)] = v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Roughness penalty `∫ ψ''ψ''ᵀ`, by trapezoid quadrature on a fixed grid.
    pub fn penalty_matrix(&self) -> DMatrix<f64> {
        let (a, b) = self.domain();
        let grid: Vec<f64> = (0..PENALTY_GRID)
            .map(|i| a + (b - a) * i as f64 / (PENALTY_GRID - 1) as f64)
            .collect();
        let w = trapezoid_weights(&grid);
        let d2 = self
            .eval_derivative(&grid, 2)
            .expect("penalty grid lies inside the domain");
        let weighted = DMatrix::from_fn(d2.nrows(), d2.ncols(), |i, j| d2[(i, j)] * w[i]);
        d2.transpose() * weighted
    }
}

/// Trapezoid weights for an increasing grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = grid[i + 1] - grid[i];
        w[i] += h / 2.0;
        w[i + 1] += h / 2.0;
    }
    w
}

/// All B-spline basis values (or derivatives) of order `order` at `t`.
fn bspline_values(knots: &[f64], order: usize, t: f64, deriv: usize) -> Vec<f64> {
    let nk = knots.len();
    let last = knots[nk - 1];
    // Order-1 indicators; the right end belongs to the last non-empty span.
    let mut vals: Vec<f64> = (0..nk - 1)
        .map(|i| {
            let inside = knots[i] <= t && t < knots[i + 1];
            let right_end = t >= last && knots[i] < knots[i + 1] && knots[i + 1] >= last;
            if inside || right_end { 1.0 } else { 0.0 }
        })
        .collect();
    if deriv >= order {
        return vec![0.0; nk - order];
    }
    // Raise the order with the Cox–de Boor recursion, switching to the
    // derivative recursion for the last `deriv` steps.
    for k in 2..=order {
        let differentiate = k > order - deriv;
        let count = nk - k;
        let mut next = vec![0.0; count];
        for (i, slot) in next.iter_mut().enumerate() {
            let d1 = knots[i + k - 1] - knots[i];
            let d2 = knots[i + k] - knots[i + 1];
            if differentiate {
                let km1 = (k - 1) as f64;
                let left = if d1 > 0.0 { vals[i] / d1 } else { 0.0 };
                let right = if d2 > 0.0 { vals[i + 1] / d2 } else { 0.0 };
                *slot = km1 * (left - right);
            } else {
                let left = if d1 > 0.0 { (t - knots[i]) / d1 * vals[i] } else { 0.0 };
                let right = if d2 > 0.0 { (knots[i + k] - t) / d2 * vals[i + 1] } else { 0.0 };
                *slot = left + right;
            }
        }
        vals = next;
    }
    vals
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothCurve {
    pub coefficients: DVector<f64>,
    pub basis: BasisSystem,
}

/// Penalized least-squares fit for one fixed set of observation times.
///
/// The normal matrix `ΨᵀΨ + λ_s P` is factorized once so every curve sharing
/// the same times reuses it.
pub struct Smoother {
    basis: BasisSystem,
    design: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl Smoother {
    pub fn new(basis: &BasisSystem, times: &[f64], roughness: f64) -> Result<Self> {
        if !(roughness >= 0.0) {
            return Err(Error::Input(format!("roughness must be >= 0, got {roughness}")));
        }
        let design = basis.eval(times)?;
        let mut normal = design.transpose() * &design;
        if roughness > 0.0 {
            normal += basis.penalty_matrix() * roughness;
        }
        let (eigvals, _) = sorted_symmetric_eigen(normal.clone());
        let top = eigvals.iter().copied().fold(0.0_f64, f64::max);
        let bottom = eigvals.iter().copied().fold(f64::INFINITY, f64::min);
        if !(top > 0.0) || bottom <= 1e-10 * top {
            return Err(Error::Conditioning(format!(
                "{} observations for {} basis functions with roughness {roughness}; \
                 use roughness > 0 or a smaller basis",
                times.len(),
                basis.size()
            )));
        }
        let chol = Cholesky::new(normal)
            .ok_or_else(|| Error::Conditioning("normal equations not positive definite".into()))?;
        Ok(Smoother {
            basis: basis.clone(),
            design,
            chol,
        })
    }

    pub fn fit(&self, values: &[f64]) -> Result<SmoothCurve> {
        if values.len() != self.design.nrows() {
            return Err(Error::Dimension(format!(
                "{} values for {} observation times",
                values.len(),
                self.design.nrows()
            )));
        }
        let y = DVector::from_column_slice(values);
        let rhs = self.design.transpose() * y;
        Ok(SmoothCurve {
            coefficients: self.chol.solve(&rhs),
            basis: self.basis.clone(),
        })
    }
}

/// Minimizes `Σ (y(t_l) − Σ θ_r ψ_r(t_l))² + λ_s ∫ (Σ θ_r ψ_r'')²`.
pub fn smooth_curve(times: &[f64], values: &[f64], basis: &BasisSystem, roughness: f64) -> Result<SmoothCurve> {
    Smoother::new(basis, times, roughness)?.fit(values)
}

pub fn eval_curve(curve: &SmoothCurve, grid: &[f64]) -> Result<Vec<f64>> {
    let phi = curve.basis.eval(grid)?;
    Ok((phi * &curve.coefficients).as_slice().to_vec())
}
