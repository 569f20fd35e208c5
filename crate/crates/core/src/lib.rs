//! Conditional Gaussian functional graphical models.
//!
//! Estimates a population network and covariate-specific differential
//! networks from multivariate functional observations. Each node is regressed
//! on all the others through a function-on-function model, which is reduced to
//! a group-lasso penalized vector-on-vector regression on FPCA scores and solved
//! with ADMM. Node-wise neighbourhoods are then symmetrized into undirected
//! graphs, one per covariate.
//!
//! The pipeline, in order:
//!
//! 1. [`basis`]: smooth the discrete observations onto a fixed basis.
//! 2. [`fpca`]: node-specific FPCA bases and projection scores.
//! 3. [`solver`]: group-lasso ADMM on the score design.
//! 4. [`neighbours`]: selective cross-validation, thresholding, relative effects.
//! 5. [`graphs`]: OR/AND symmetrization and edge weights.
//!
//! [`simgen`] and [`metrics`] reproduce the block-banded simulation study and
//! score edge recovery. [`pipeline`] ties the steps together.

// Negated comparisons are used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod fpca;
pub mod funcdata;
pub mod graphs;
pub mod metrics;
pub mod neighbours;
pub mod pipeline;
pub mod simgen;
pub mod solver;

mod linalg;

pub use error::{Error, Result};
pub use funcdata::{CovariateDesign, FunctionalDataset};
pub use graphs::{ConditionalGraphs, SymmetrizationMode};
pub use neighbours::{NodeResult, TuningConfig};
pub use pipeline::{fit, FitConfig, FitOutput};

/// Formats a float with 17 significant digits, enough for an exact round trip.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0.0000000000000000e0" noise
        return "0".to_string();
    }
    format!("{x:.16e}")
}
