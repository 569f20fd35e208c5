use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use condfgm::funcdata::{write_covariates_csv, write_functional_csv};
use condfgm::simgen::{sample_dataset, scenario_pair, Scenario, SimulatedData, SimulationConfig};

use crate::files::{create, write_json, TruthFile, COVARIATES_FILE, FUNCTIONS_FILE, TRUTH_FILE};
use crate::SimulateArgs;

pub struct Simulation {
    pub data: SimulatedData,
    pub truth: TruthFile,
}

pub fn generate(scenario: Scenario, p: usize, m_star: usize, cfg: &SimulationConfig) -> Result<Simulation> {
    let pair = scenario_pair(scenario, p, m_star)?;
    let data = sample_dataset(&pair, cfg)?;
    let truth = TruthFile {
        scenario,
        p,
        m_star,
        n_per_group: cfg.n_per_group,
        time_points: cfg.time_points,
        noise_variance: cfg.noise_variance,
        seed: cfg.seed,
        node_ids: data.dataset.node_ids().to_vec(),
        repairs: pair.repairs.clone(),
        graphs: data.truth.clone(),
    };
    Ok(Simulation { data, truth })
}

pub fn write(sim: &Simulation, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_functional_csv(&sim.data.dataset, create(&out.join(FUNCTIONS_FILE))?)?;
    write_covariates_csv(&sim.data.raw_covariates, create(&out.join(COVARIATES_FILE))?)?;
    write_json(&out.join(TRUTH_FILE), &sim.truth)
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let cfg = SimulationConfig {
        n_per_group: args.n_per_group,
        time_points: args.time_points,
        noise_variance: args.noise_variance,
        seed: args.seed,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build()?;
    let sim = pool.install(|| generate(args.scenario, args.p, args.m_star, &cfg))?;
    for r in &sim.truth.repairs {
        eprintln!("note: {r}");
    }
    write(&sim, &args.out)?;
    eprintln!(
        "wrote {} samples x {} nodes to {} (|G0| = {}, |G1| = {})",
        sim.data.dataset.n(),
        sim.data.dataset.p(),
        args.out.display(),
        sim.truth.graphs.g0.len(),
        sim.truth.graphs.g1.len()
    );
    Ok(())
}
