use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use condfgm::pipeline::BasisKind;
use condfgm::simgen::Scenario;
use condfgm::SymmetrizationMode;

mod bench;
mod config;
mod evaluate;
mod files;
mod fit;
mod simulate;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "condfgm", version, about = "Conditional functional graphical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a two-group block-banded simulation.
    Simulate(SimulateArgs),
    /// Estimate population and differential graphs.
    Fit(FitArgs),
    /// Score estimated graphs against simulation truth.
    Evaluate(EvaluateArgs),
    /// Time simulate + fit over a range of network sizes.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_scenario)]
    scenario: Scenario,
    #[arg(long)]
    p: usize,
    #[arg(long = "n-per-group")]
    n_per_group: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 15)]
    m_star: usize,
    #[arg(long, default_value_t = 100)]
    time_points: usize,
    #[arg(long, default_value_t = 0.5)]
    noise_variance: f64,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Flags mirroring the configuration file keys; flags win over the file.
#[derive(Args, Clone, Default)]
struct TuningFlags {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_basis)]
    basis: Option<BasisKind>,
    #[arg(long)]
    basis_size: Option<usize>,
    #[arg(long)]
    roughness: Option<f64>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    pve: Option<f64>,
    /// Fixed truncation level M (overrides --pve).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    m_max: Option<usize>,
    #[arg(long)]
    n_lambda: Option<usize>,
    #[arg(long)]
    lambda_min_ratio: Option<f64>,
    /// Comma-separated data-adaptive ε quantiles.
    #[arg(long)]
    epsilon_quantiles: Option<String>,
    /// Comma-separated fixed ε candidates.
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    search_fraction: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<SymmetrizationMode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

impl TuningFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let overrides = [
            ("basis", self.basis.map(|b| b.to_string())),
            ("basis_size", self.basis_size.map(|v| v.to_string())),
            ("roughness", self.roughness.map(|v| v.to_string())),
            ("grid_size", self.grid_size.map(|v| v.to_string())),
            ("pve", self.pve.map(|v| v.to_string())),
            ("m", self.m.map(|v| v.to_string())),
            ("m_max", self.m_max.map(|v| v.to_string())),
            ("n_lambda", self.n_lambda.map(|v| v.to_string())),
            ("lambda_min_ratio", self.lambda_min_ratio.map(|v| v.to_string())),
            ("epsilon_quantiles", self.epsilon_quantiles.clone()),
            ("epsilon", self.epsilon.clone()),
            ("folds", self.folds.map(|v| v.to_string())),
            ("search_fraction", self.search_fraction.map(|v| v.to_string())),
            ("mode", self.mode.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("threads", self.threads.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        cfg.fit.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Long-format CSV: sample_id,node_id,time,value.
    #[arg(long)]
    functions: PathBuf,
    /// Wide CSV: sample_id,<var1>,...; omit for a population graph only.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Reference level of a categorical covariate, `variable=level`; repeatable.
    #[arg(long = "reference")]
    references: Vec<String>,
    #[command(flatten)]
    tuning: TuningFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directories holding fit outputs, one per replicate.
    #[arg(required = true)]
    estimates: Vec<PathBuf>,
    /// Truth file shared by all replicates; default `<dir>/truth.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Covariate whose differential graph is scored.
    #[arg(long, default_value_t = 1)]
    covariate: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 15, 25, 50])]
    p: Vec<usize>,
    #[arg(long = "n-per-group", default_value_t = 100)]
    n_per_group: usize,
    #[arg(long, value_parser = parse_scenario, default_value = "S3")]
    scenario: Scenario,
    #[arg(long, default_value_t = 15)]
    m_star: usize,
    #[command(flatten)]
    tuning: TuningFlags,
    #[arg(long)]
    out: PathBuf,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: condfgm::Error| e.to_string())
}

fn parse_basis(s: &str) -> Result<BasisKind, String> {
    s.parse().map_err(|e: condfgm::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<SymmetrizationMode, String> {
    s.parse().map_err(|e: condfgm::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Fit(a) => fit::run(&a),
        Command::Evaluate(a) => evaluate::run(&a),
        Command::Bench(a) => bench::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
