//! Browser bindings. Every export takes plain numbers and strings and
//! returns a JSON document; the page in `www/` does the drawing.

use condfgm::basis::Smoother;
use condfgm::graphs::{EdgeSet, SymmetrizationMode};
use condfgm::metrics;
use condfgm::pipeline::{fit, BasisKind, FitConfig, SmoothingConfig, Truncation};
use condfgm::simgen::{sample_dataset, scenario_pair, true_graphs, Scenario, SimulationConfig};
use condfgm::{Error, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_P: usize = 12;

fn edges(set: &EdgeSet) -> Value {
    set.iter().map(|&(u, v)| json!([u, v])).collect()
}

fn check_p(p: usize) -> Result<()> {
    if !(3..=MAX_P).contains(&p) {
        return Err(Error::Input(format!("p must lie in 3..={MAX_P}, got {p}")));
    }
    Ok(())
}

/// True graphs of a scenario plus the first sample's curves in each group.
pub fn simulate_preview_json(scenario: &str, p: usize, seed: u64) -> Result<Value> {
    check_p(p)?;
    let sc: Scenario = scenario.parse()?;
    let pair = scenario_pair(sc, p, 5)?;
    let truth = true_graphs(&pair);
    let cfg = SimulationConfig {
        n_per_group: 1,
        time_points: 60,
        seed,
        ..SimulationConfig::default()
    };
    let sim = sample_dataset(&pair, &cfg)?;
    let ds = &sim.dataset;
    let curves: Vec<Value> = (0..ds.n())
        .map(|i| {
            let nodes: Vec<Value> = (0..p)
                .map(|k| {
                    let s = ds.series(i, k);
                    json!({ "t": s.times, "y": s.values })
                })
                .collect();
            json!({ "group": i, "nodes": nodes })
        })
        .collect();
    Ok(json!({
        "scenario": sc.to_string(),
        "p": p,
        "node_ids": ds.node_ids(),
        "repairs": pair.repairs,
        "truth": { "g0": edges(&truth.g0), "g1": edges(&truth.g1), "group1": edges(&truth.group1) },
        "samples": curves,
    }))
}

/// Simulates a small two-group dataset, fits it and scores the result.
pub fn fit_demo_json(scenario: &str, p: usize, n_per_group: usize, seed: u64, mode: &str) -> Result<Value> {
    check_p(p)?;
    if !(10..=200).contains(&n_per_group) {
        return Err(Error::Input(format!("samples per group must lie in 10..=200, got {n_per_group}")));
    }
    let sc: Scenario = scenario.parse()?;
    let mode: SymmetrizationMode = mode.parse()?;
    let pair = scenario_pair(sc, p, 5)?;
    let truth = true_graphs(&pair);
    let sim = sample_dataset(
        &pair,
        &SimulationConfig {
            n_per_group,
            time_points: 50,
            seed,
            ..SimulationConfig::default()
        },
    )?;
    let mut cfg = FitConfig::default();
    cfg.smoothing.size = 9;
    cfg.fpca.grid_size = 50;
    cfg.fpca.truncation = Truncation::Pve(0.95);
    cfg.tuning.n_lambda = 20;
    cfg.mode = mode;
    let out = fit(&sim.dataset, &sim.design, &cfg, 1)?;
    let g0 = out.graphs.graphs[0].edge_set();
    let g1 = out.graphs.graphs[1].edge_set();
    let score = |est: &EdgeSet, truth: &EdgeSet| -> Result<Value> {
        let (c, s) = metrics::evaluate(est, truth, p)?;
        Ok(json!({ "tp": c.tp, "fp": c.fp, "fn": c.fn_, "precision": s.precision, "tpr": s.tpr, "f1": s.f1 }))
    };
    Ok(json!({
        "p": p,
        "m": out.m,
        "mode": mode.to_string(),
        "estimate": { "g0": edges(&g0), "g1": edges(&g1) },
        "truth": { "g0": edges(&truth.g0), "g1": edges(&truth.g1) },
        "scores": { "g0": score(&g0, &truth.g0)?, "g1": score(&g1, &truth.g1)? },
        "lambda": out.node_results.iter().map(|r| r.lambda).collect::<Vec<_>>(),
    }))
}

/// Noisy observations of one simulated curve, the basis fit and the noise-free curve.
pub fn smoothing_json(basis: &str, size: usize, roughness: f64, noise_variance: f64, seed: u64) -> Result<Value> {
    if noise_variance.is_nan() || noise_variance < 0.0 {
        return Err(Error::Input("noise variance must be >= 0".into()));
    }
    let basis_kind: BasisKind = basis.parse()?;
    let smoothing = SmoothingConfig {
        basis: basis_kind,
        size,
        roughness,
    };
    let system = smoothing.basis_system()?;
    let pair = scenario_pair(Scenario::S1, 3, 7)?;
    let draw = |noise_variance| {
        sample_dataset(
            &pair,
            &SimulationConfig {
                n_per_group: 1,
                time_points: 80,
                noise_variance,
                seed,
            },
        )
    };
    let noisy = draw(noise_variance)?;
    let clean = draw(0.0)?;
    let obs = noisy.dataset.series(0, 0);
    let smoother = Smoother::new(&system, &obs.times, roughness)?;
    let curve = smoother.fit(&obs.values)?;
    let grid: Vec<f64> = (1..=200).map(|k| k as f64 / 200.0).collect();
    let fitted = system.eval(&grid)? * &curve.coefficients;
    Ok(json!({
        "t": obs.times,
        "observed": obs.values,
        "truth": clean.dataset.series(0, 0).values,
        "grid": grid,
        "fitted": fitted.as_slice(),
        "coefficients": curve.coefficients.as_slice(),
    }))
}

fn to_js(v: Result<Value>) -> std::result::Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn simulate_preview(scenario: &str, p: usize, seed: u32) -> std::result::Result<String, JsError> {
    to_js(simulate_preview_json(scenario, p, u64::from(seed)))
}

#[wasm_bindgen]
pub fn fit_demo(scenario: &str, p: usize, n_per_group: usize, seed: u32, mode: &str) -> std::result::Result<String, JsError> {
    to_js(fit_demo_json(scenario, p, n_per_group, u64::from(seed), mode))
}

#[wasm_bindgen]
pub fn smoothing_explorer(
    basis: &str,
    size: usize,
    roughness: f64,
    noise_variance: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(smoothing_json(basis, size, roughness, noise_variance, u64::from(seed)))
}
