//! End-to-end estimation: smoothing, FPCA, node-wise fits, symmetrization.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, Smoother};
use crate::error::{Error, Result};
use crate::fpca::{project_scores, select_truncation, GridCurves, NodeBasis, Quadrature};
use crate::funcdata::{validate, CovariateDesign, FunctionalDataset};
use crate::graphs::{group_graph, ConditionalGraphs, EdgeSet, SymmetrizationMode};
use crate::neighbours::{fit_node, NodeResult, TuningConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    #[default]
    Fourier,
    BSpline,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Fourier => "fourier",
            BasisKind::BSpline => "bspline",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fourier" => Ok(BasisKind::Fourier),
            "bspline" | "b-spline" => Ok(BasisKind::BSpline),
            _ => Err(Error::Input(format!("unknown basis `{s}` (expected fourier or bspline)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub basis: BasisKind,
    pub size: usize,
    pub roughness: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            basis: BasisKind::Fourier,
            size: 15,
            roughness: 0.0,
        }
    }
}

impl SmoothingConfig {
    pub fn basis_system(&self) -> Result<BasisSystem> {
        match self.basis {
            BasisKind::Fourier => BasisSystem::fourier(self.size, (0.0, 1.0)),
            BasisKind::BSpline => BasisSystem::bspline(self.size, 4, (0.0, 1.0)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Truncation {
    /// Largest per-node `M` reaching this fraction of explained variance.
    Pve(f64),
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpcaConfig {
    pub grid_size: usize,
    pub truncation: Truncation,
    /// Upper bound on `M`; `None` uses the smoothing basis size.
    pub m_max: Option<usize>,
}

impl Default for FpcaConfig {
    fn default() -> Self {
        FpcaConfig {
            grid_size: 100,
            truncation: Truncation::Pve(0.95),
            m_max: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub smoothing: SmoothingConfig,
    pub fpca: FpcaConfig,
    pub tuning: TuningConfig,
    pub mode: SymmetrizationMode,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smoothing.size == 0 {
            return Err(Error::Input("smoothing basis size must be >= 1".into()));
        }
        if !(self.smoothing.roughness >= 0.0) {
            return Err(Error::Input("roughness must be >= 0".into()));
        }
        if self.fpca.grid_size < 2 {
            return Err(Error::Input("FPCA grid needs at least 2 points".into()));
        }
        match self.fpca.truncation {
            Truncation::Pve(v) if !(v > 0.0 && v <= 1.0) => {
                return Err(Error::Input(format!("pve must lie in (0, 1], got {v}")))
            }
            Truncation::Fixed(0) => return Err(Error::Input("fixed M must be >= 1".into())),
            _ => {}
        }
        self.tuning.validate()
    }
}

/// Graph for the samples with a binary covariate switched on.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupGraph {
    pub covariate: usize,
    pub edges: EdgeSet,
}

pub struct FitOutput {
    pub node_ids: Vec<String>,
    /// Shared truncation level.
    pub m: usize,
    /// Truncation each node would have chosen on its own.
    pub node_m: Vec<usize>,
    pub eigenvalues: Vec<Vec<f64>>,
    pub node_results: Vec<NodeResult>,
    pub graphs: ConditionalGraphs,
    pub group_graphs: Vec<GroupGraph>,
}

/// Smooths every curve and evaluates it on the quadrature grid. Curves
/// sharing the same observation times reuse one factorization.
pub fn smooth_to_grid(ds: &FunctionalDataset, cfg: &SmoothingConfig, quad: &Quadrature) -> Result<GridCurves> {
    let basis = cfg.basis_system()?;
    let on_grid = basis.eval(&quad.grid)?;
    let n = ds.n();
    let mut cache: HashMap<Vec<u64>, Smoother> = HashMap::new();
    let mut values = vec![DMatrix::zeros(n, quad.len()); ds.p()];
    for (k, node_values) in values.iter_mut().enumerate() {
        for i in 0..n {
            let times = ds.unit_times(i, k);
            let key: Vec<u64> = times.iter().map(|t| t.to_bits()).collect();
            let smoother = match cache.entry(key) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(Smoother::new(&basis, &times, cfg.roughness).map_err(|e| e.at_node(k))?)
                }
            };
            let curve = smoother.fit(&ds.series(i, k).values)?;
            let row = &on_grid * &curve.coefficients;
            node_values.row_mut(i).copy_from(&row.transpose());
        }
    }
    GridCurves::new(quad.clone(), values)
}

fn run_nodes<T: Send>(p: usize, threads: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if threads != 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
            return pool.install(|| (0..p).into_par_iter().map(&f).collect());
        }
    }
    let _ = threads;
    (0..p).map(f).collect()
}

/// Runs the full estimator. `threads = 0` uses all available cores; results
/// do not depend on the thread count.
pub fn fit(ds: &FunctionalDataset, x: &CovariateDesign, cfg: &FitConfig, threads: usize) -> Result<FitOutput> {
    cfg.validate()?;
    let report = validate(ds);
    if report.has_errors() {
        let first = report.issues.iter().find(|i| i.severity == crate::funcdata::Severity::Error);
        return Err(Error::Data(format!(
            "dataset failed validation: {}",
            first.map_or_else(String::new, |i| format!("{}: {}", i.location, i.message))
        )));
    }
    if x.n() != ds.n() {
        return Err(Error::Dimension(format!("{} covariate rows for {} samples", x.n(), ds.n())));
    }
    let quad = Quadrature::uniform(cfg.fpca.grid_size, (0.0, 1.0));
    let curves = smooth_to_grid(ds, &cfg.smoothing, &quad)?;
    let m_max = cfg.fpca.m_max.unwrap_or(cfg.smoothing.size).min(quad.len());

    let bases: Vec<NodeBasis> = run_nodes(ds.p(), threads, |k| {
        NodeBasis::estimate(k, &curves.values[k], &quad, m_max).map_err(|e| e.at_node(k))
    })?;
    let node_m = bases
        .iter()
        .map(|b| {
            let eig: Vec<f64> = b.eigenvalues.iter().copied().collect();
            match cfg.fpca.truncation {
                Truncation::Pve(v) => select_truncation(&eig, v, m_max).map_err(|e| e.at_node(b.node)),
                Truncation::Fixed(m) => Ok(m.min(m_max)),
            }
        })
        .collect::<Result<Vec<usize>>>()?;
    let m = node_m.iter().copied().max().unwrap_or(1);

    let node_results = run_nodes(ds.p(), threads, |j| {
        let scores = project_scores(&curves, &bases[j], m).map_err(|e| e.at_node(j))?;
        fit_node(&scores, x, &cfg.tuning)
    })?;
    let graphs = ConditionalGraphs::build(&node_results, x.q(), cfg.mode)?;
    let group_graphs = (1..=x.q())
        .filter(|&c| x.is_binary(c))
        .map(|c| {
            Ok(GroupGraph {
                covariate: c,
                edges: group_graph(&node_results, x, c, cfg.mode)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FitOutput {
        node_ids: ds.node_ids().to_vec(),
        m,
        node_m,
        eigenvalues: bases.iter().map(|b| b.eigenvalues.iter().copied().collect()).collect(),
        node_results,
        graphs,
        group_graphs,
    })
}

/// Re-symmetrizes stored node results under another mode without refitting.
pub fn resymmetrize(out: &FitOutput, x: &CovariateDesign, mode: SymmetrizationMode) -> Result<(ConditionalGraphs, Vec<GroupGraph>)> {
    let graphs = ConditionalGraphs::build(&out.node_results, x.q(), mode)?;
    let groups = out
        .group_graphs
        .iter()
        .map(|g| {
            Ok(GroupGraph {
                covariate: g.covariate,
                edges: group_graph(&out.node_results, x, g.covariate, mode)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((graphs, groups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{scenario_pair, sample_dataset, Scenario, SimulationConfig};

    fn small_config() -> FitConfig {
        let mut cfg = FitConfig::default();
        cfg.smoothing.size = 5;
        cfg.fpca.grid_size = 50;
        cfg.fpca.truncation = Truncation::Fixed(3);
        cfg.tuning.n_lambda = 10;
        cfg
    }

    #[test]
    fn fits_small_simulation() {
        let pair = scenario_pair(Scenario::S1, 4, 3).unwrap();
        let sim = sample_dataset(
            &pair,
            &SimulationConfig {
                n_per_group: 30,
                time_points: 40,
                noise_variance: 0.1,
                seed: 3,
            },
        )
        .unwrap();
        let out = fit(&sim.dataset, &sim.design, &small_config(), 1).unwrap();
        assert_eq!(out.m, 3);
        assert_eq!(out.node_results.len(), 4);
        assert_eq!(out.graphs.graphs.len(), 2);
        assert_eq!(out.group_graphs.len(), 1);
        for (j, r) in out.node_results.iter().enumerate() {
            assert_eq!(r.node, j);
        }
    }

    #[test]
    fn intercept_only_gives_population_graph_only() {
        let pair = scenario_pair(Scenario::S1, 4, 3).unwrap();
        let sim = sample_dataset(
            &pair,
            &SimulationConfig {
                n_per_group: 15,
                time_points: 40,
                noise_variance: 0.1,
                seed: 4,
            },
        )
        .unwrap();
        let x = CovariateDesign::intercept_only(sim.dataset.n());
        let out = fit(&sim.dataset, &x, &small_config(), 1).unwrap();
        assert_eq!(out.graphs.graphs.len(), 1);
        assert!(out.group_graphs.is_empty());
    }

    #[test]
    fn bad_config_rejected() {
        let mut cfg = FitConfig::default();
        cfg.fpca.truncation = Truncation::Pve(1.5);
        assert!(cfg.validate().is_err());
        assert!("wavelet".parse::<BasisKind>().is_err());
    }
}
