use std::fs;
use std::time::Instant;

use anyhow::{Context, Result};
use condfgm::fmt_f64;
use condfgm::pipeline::fit;
use condfgm::simgen::SimulationConfig;

use crate::simulate::generate;
use crate::BenchArgs;

pub fn run(args: &BenchArgs) -> Result<()> {
    let cfg = args.tuning.resolve()?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    w.write_record(["p", "n", "m", "threads", "simulate_seconds", "fit_seconds", "edges_g0", "edges_g1"])?;
    println!("{:>4} {:>5} {:>3} {:>10} {:>10}", "p", "n", "M", "sim (s)", "fit (s)");
    for &p in &args.p {
        let sim_cfg = SimulationConfig {
            n_per_group: args.n_per_group,
            seed: cfg.fit.tuning.seed,
            ..SimulationConfig::default()
        };
        let t0 = Instant::now();
        let sim = generate(args.scenario, p, args.m_star, &sim_cfg)?;
        let sim_s = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let out = fit(&sim.data.dataset, &sim.data.design, &cfg.fit, cfg.threads)?;
        let fit_s = t1.elapsed().as_secs_f64();
        let n = sim.data.dataset.n();
        let g1 = out.graphs.graphs.get(1).map_or(0, |g| g.edges.len());
        w.write_record([
            p.to_string(),
            n.to_string(),
            out.m.to_string(),
            cfg.threads.to_string(),
            fmt_f64(sim_s),
            fmt_f64(fit_s),
            out.graphs.population().edges.len().to_string(),
            g1.to_string(),
        ])?;
        w.flush()?;
        println!("{p:>4} {n:>5} {:>3} {sim_s:>10.2} {fit_s:>10.2}", out.m);
    }
    Ok(())
}
