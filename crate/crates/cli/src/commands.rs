//! The four subcommands. Each writes its primary outputs, the effective
//! config, and a metadata side file holding everything run-dependent
//! (timestamps, wall time, worker count), so that primary outputs are
//! byte-identical across reruns with the same config.

use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use edpcausal::diagnostics::diagnose;
use edpcausal::effects::{compute_effects, write_effect_draws, write_effect_summary, EffectEstimate};
use edpcausal::sampler::{read_draws, write_draws, PosteriorDraws};
use edpcausal::sim::{evaluate_replicates, generate_scenario, write_benchmark, BenchmarkRow, ScenarioSpec};
use edpcausal::{fit, load_dataset, standardize_continuous};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const DRAWS_FILE: &str = "draws.json";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const EFFECTS_FILE: &str = "effects.json";
pub const EFFECT_DRAWS_FILE: &str = "effects.csv";
pub const BENCHMARK_FILE: &str = "benchmark.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const DIAGNOSTICS_TEXT_FILE: &str = "diagnostics.txt";
pub const TRACES_FILE: &str = "traces.csv";
pub const CONFIG_ECHO_FILE: &str = "effective_config.toml";
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    started_unix_seconds: u64,
    wall_seconds: f64,
    workers: usize,
}

#[derive(Serialize)]
struct ChainReport {
    chain: usize,
    retained: usize,
    beta_acceptance: Option<f64>,
    alpha_omega_acceptance: Option<f64>,
    impute_acceptance: Option<f64>,
    mean_k: f64,
}

#[derive(Serialize)]
struct FitReport {
    n: usize,
    covariates: usize,
    missing_cells: usize,
    chains: usize,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    per_chain: Vec<ChainReport>,
}

fn output_dir(config: &RunConfig) -> Result<&Path, CliError> {
    let dir = config.paths.output.as_path();
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("paths.output: cannot create `{}`: {e}", dir.display())))?;
    Ok(dir)
}

/// Writes the effective config and the metadata side file.
fn finish(config: &RunConfig, command: &str, started: (SystemTime, Instant)) -> Result<(), CliError> {
    let dir = config.paths.output.as_path();
    fs::write(dir.join(CONFIG_ECHO_FILE), config.to_toml()?).map_err(CliError::io)?;
    let meta = Metadata {
        command,
        version: env!("CARGO_PKG_VERSION"),
        started_unix_seconds: started.0.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        wall_seconds: started.1.elapsed().as_secs_f64(),
        workers: rayon::current_num_threads(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(dir.join(METADATA_FILE), text).map_err(CliError::io)
}

fn now() -> (SystemTime, Instant) {
    (SystemTime::now(), Instant::now())
}

fn load_posterior(config: &RunConfig) -> Result<PosteriorDraws, CliError> {
    let path = config.paths.draws_path();
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "paths.draws: `{}` does not exist; run `fit` first or pass --draws",
            path.display()
        )));
    }
    read_draws(&path).map_err(CliError::runtime)
}

pub fn cmd_fit(config: &RunConfig) -> Result<String, CliError> {
    let started = now();
    let data_path = config.data_path()?;
    let schema = config.schema(data_path)?;
    config.sampler.validate().map_err(CliError::config)?;
    let data = load_dataset(data_path, &schema).map_err(CliError::config)?;
    let prior = if config.prior.is_empty() {
        None
    } else {
        let (std_data, _) = standardize_continuous(&data).map_err(CliError::runtime)?;
        config.prior.resolve(&std_data)?
    };
    let dir = output_dir(config)?;
    let posterior = fit(&data, &config.sampler, prior).map_err(CliError::runtime)?;
    write_draws(&posterior, dir.join(DRAWS_FILE)).map_err(CliError::runtime)?;
    let report = FitReport {
        n: data.n(),
        covariates: data.p(),
        missing_cells: data.missing_count(),
        chains: posterior.chains.len(),
        iterations: config.sampler.iterations,
        burn_in: config.sampler.burn_in,
        thin: config.sampler.thin,
        per_chain: posterior
            .chains
            .iter()
            .map(|c| ChainReport {
                chain: c.chain,
                retained: c.draws.len(),
                beta_acceptance: c.stats.beta_acceptance(),
                alpha_omega_acceptance: c.stats.alpha_omega_acceptance(),
                impute_acceptance: c.stats.impute_acceptance(),
                mean_k: c.draws.iter().map(|d| d.k() as f64).sum::<f64>() / c.draws.len().max(1) as f64,
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(dir.join(FIT_REPORT_FILE), &text).map_err(CliError::io)?;
    finish(config, "fit", started)?;
    Ok(format!(
        "fit: {} chains x {} retained draws written to {}",
        report.chains,
        config.sampler.retained(),
        dir.join(DRAWS_FILE).display()
    ))
}

fn run_queries(config: &RunConfig, posterior: &PosteriorDraws) -> Result<Vec<EffectEstimate>, CliError> {
    // Validate every query before any posterior work.
    for q in &config.effects {
        q.resolve(&posterior.schema, &posterior.scaling).map_err(CliError::config)?;
    }
    if config.effect_settings.stride == 0 {
        return Err(CliError::Usage("effect_settings.stride must be at least 1".into()));
    }
    compute_effects(posterior, &config.effects, config.effect_settings).map_err(CliError::runtime)
}

pub fn cmd_effects(config: &RunConfig) -> Result<String, CliError> {
    let started = now();
    if config.effects.is_empty() {
        return Err(CliError::Usage(
            "no estimand requested: add [[effects]] entries to the config or pass --estimand".into(),
        ));
    }
    let posterior = load_posterior(config)?;
    let estimates = run_queries(config, &posterior)?;
    let dir = output_dir(config)?;
    write_effect_summary(&estimates, dir.join(EFFECTS_FILE)).map_err(CliError::runtime)?;
    write_effect_draws(&estimates, dir.join(EFFECT_DRAWS_FILE)).map_err(CliError::runtime)?;
    finish(config, "effects", started)?;
    let mut out = String::new();
    for e in &estimates {
        out.push_str(&format!(
            "{}: {:.4} [{:.4}, {:.4}] from {} draws\n",
            e.label, e.median, e.lower, e.upper, e.iterations_used
        ));
    }
    Ok(out.trim_end().to_string())
}

pub fn cmd_simulate(config: &RunConfig) -> Result<String, CliError> {
    let started = now();
    let b = &config.benchmark;
    ScenarioSpec { scenario: b.scenario, n: b.n, seed: config.seed, missing: false }
        .validate()
        .map_err(CliError::config)?;
    if b.estimators.is_empty() {
        return Err(CliError::Usage("benchmark.estimators: no estimator requested".into()));
    }
    let dir = output_dir(config)?;
    if b.write_data {
        let spec = ScenarioSpec { scenario: b.scenario, n: b.n, seed: config.seed, missing: false };
        let (d, _) = generate_scenario(&spec).map_err(CliError::runtime)?;
        edpcausal::save_dataset(&d, dir.join("data.csv")).map_err(CliError::runtime)?;
        if b.scenario <= 2 {
            let (m, _) = generate_scenario(&ScenarioSpec { missing: true, ..spec }).map_err(CliError::runtime)?;
            edpcausal::save_dataset(&m, dir.join("data_missing.csv")).map_err(CliError::runtime)?;
        }
        let schema = serde_json::to_string_pretty(d.schema()).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(dir.join("schema.json"), schema).map_err(CliError::io)?;
    }
    let metrics =
        evaluate_replicates(b.scenario, b.n, &b.estimators, b.replicates, config.seed).map_err(|e| match e {
            edpcausal::Error::Validation(_) => CliError::config(e),
            e => CliError::runtime(e),
        })?;
    let rows: Vec<BenchmarkRow> = metrics.iter().map(|m| BenchmarkRow::new(b.scenario, b.n, m)).collect();
    write_benchmark(&rows, dir.join(BENCHMARK_FILE)).map_err(CliError::runtime)?;
    finish(config, "simulate", started)?;
    let mut out = format!(
        "{:<18} {:<14} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "estimator", "estimand", "truth", "bias", "esd", "coverage", "width"
    );
    for r in &rows {
        out.push_str(&format!(
            "{:<18} {:<14} {:>8.4} {:>8.4} {:>8.4} {:>8.3} {:>8.4}\n",
            r.estimator,
            format!("{:?}", r.estimand),
            r.truth,
            r.bias,
            r.esd,
            r.coverage,
            r.width
        ));
    }
    Ok(out.trim_end().to_string())
}

pub fn cmd_diagnose(config: &RunConfig) -> Result<String, CliError> {
    let started = now();
    let posterior = load_posterior(config)?;
    if posterior.chains.len() < 2 {
        return Err(CliError::Usage(format!(
            "diagnose needs at least 2 chains: the Gelman-Rubin statistic compares between-chain and \
             within-chain variance, and `{}` holds {} chain. Refit with sampler.chains >= 2 (e.g. --chains 3).",
            config.paths.draws_path().display(),
            posterior.chains.len()
        )));
    }
    let estimates = if config.effects.is_empty() { Vec::new() } else { run_queries(config, &posterior)? };
    let report = diagnose(&posterior, &estimates).map_err(CliError::runtime)?;
    let dir = output_dir(config)?;
    report.write_json(dir.join(DIAGNOSTICS_FILE)).map_err(CliError::runtime)?;
    report.write_traces(dir.join(TRACES_FILE)).map_err(CliError::runtime)?;
    let text = report.to_text();
    fs::write(dir.join(DIAGNOSTICS_TEXT_FILE), &text).map_err(CliError::io)?;
    finish(config, "diagnose", started)?;
    Ok(text.trim_end().to_string())
}
