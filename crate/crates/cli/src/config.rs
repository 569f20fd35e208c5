//! `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys:
//!
//! | key | value |
//! |---|---|
//! | `basis` | `fourier` or `bspline` |
//! | `basis_size` | smoothing basis size R |
//! | `roughness` | second-derivative penalty λ_s |
//! | `grid_size` | FPCA quadrature points G |
//! | `pve` | explained-variance threshold in (0, 1] |
//! | `m` | fixed truncation M (overrides `pve`) |
//! | `m_max` | cap on M |
//! | `n_lambda`, `lambda_min_ratio` | λ grid |
//! | `epsilon_quantiles` | comma list, data-adaptive ε candidates |
//! | `epsilon` | comma list, fixed ε candidates |
//! | `folds`, `search_fraction` | SCV |
//! | `admm_rho`, `admm_tol_abs`, `admm_tol_rel`, `admm_max_iter` | solver |
//! | `mode` | `OR` or `AND` |
//! | `seed`, `threads` | run control |

use std::path::Path;

use anyhow::{bail, Context, Result};
use condfgm::neighbours::EpsilonGrid;
use condfgm::pipeline::{FitConfig, Truncation};
use serde::Serialize;

#[derive(Clone, Debug, Default, Serialize)]
pub struct RunConfig {
    pub fit: FitConfig,
    pub threads: usize,
}

fn list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number `{s}`")))
        .collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = &mut self.fit;
        let v = value.trim();
        match key.trim() {
            "basis" => f.smoothing.basis = v.parse()?,
            "basis_size" => f.smoothing.size = v.parse()?,
            "roughness" => f.smoothing.roughness = v.parse()?,
            "grid_size" => f.fpca.grid_size = v.parse()?,
            "pve" => f.fpca.truncation = Truncation::Pve(v.parse()?),
            "m" => f.fpca.truncation = Truncation::Fixed(v.parse()?),
            "m_max" => f.fpca.m_max = Some(v.parse()?),
            "n_lambda" => f.tuning.n_lambda = v.parse()?,
            "lambda_min_ratio" => f.tuning.lambda_min_ratio = v.parse()?,
            "epsilon_quantiles" => {
                f.tuning.epsilon = EpsilonGrid::DataAdaptive {
                    quantiles: list(v)?,
                    absolute: 1e-6,
                }
            }
            "epsilon" => f.tuning.epsilon = EpsilonGrid::Fixed(list(v)?),
            "folds" => f.tuning.folds = v.parse()?,
            "search_fraction" => f.tuning.search_fraction = v.parse()?,
            "admm_rho" => f.tuning.admm.rho = v.parse()?,
            "admm_tol_abs" => f.tuning.admm.tol_abs = v.parse()?,
            "admm_tol_rel" => f.tuning.admm.tol_rel = v.parse()?,
            "admm_max_iter" => f.tuning.admm.max_iter = v.parse()?,
            "mode" => f.mode = v.parse()?,
            "seed" => f.tuning.seed = v.parse()?,
            "threads" => self.threads = v.parse()?,
            other => bail!("unknown configuration key `{other}`"),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected `key = value`", lineno + 1))?;
            cfg.set(k, v).with_context(|| format!("line {}", lineno + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }
}
