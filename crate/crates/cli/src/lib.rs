//! Command-line front end for the `edpcausal` engine.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime or
//! numerical failure.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use edpcausal::effects::{EffectQuery, Functional};
use edpcausal::sim::EstimatorKind;

pub use config::{load_config, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// Core errors raised while checking user input.
    pub fn config(e: edpcausal::Error) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn runtime(e: edpcausal::Error) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub fn io(e: std::io::Error) -> Self {
        CliError::Runtime(format!("I/O error: {e}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "edpcausal", version, about = "Causal effects from an enriched Dirichlet process mixture")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; every key is optional.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// JSON variable schema; inferred from the data when omitted.
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    /// Outcome column for schema inference.
    #[arg(long, global = true)]
    pub outcome: Option<String>,
    /// Treatment column for schema inference.
    #[arg(long, global = true)]
    pub treatment: Option<String>,
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Posterior draws file (defaults to <output>/draws.json).
    #[arg(long, global = true)]
    pub draws: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "EDPCAUSAL_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Gibbs sampler and write posterior draws.
    Fit {
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
    },
    /// Summarize causal effects over stored posterior draws.
    Effects(EffectArgs),
    /// Run a simulation benchmark and write the metrics table.
    Simulate {
        #[arg(long)]
        scenario: Option<u8>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Estimator with default settings: iptw, parametric_bayes, edp or
        /// edp_missing. Repeatable; replaces the configured list.
        #[arg(long = "estimator")]
        estimators: Vec<String>,
        /// Also write a dataset drawn with the run seed, and its schema.
        #[arg(long)]
        write_data: bool,
    },
    /// Convergence diagnostics across chains.
    Diagnose(EffectArgs),
}

#[derive(Debug, Args)]
pub struct EffectArgs {
    /// Functional with default settings, e.g. relative_risk. Repeatable;
    /// appended to the configured queries.
    #[arg(long = "estimand")]
    pub estimands: Vec<String>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
}

fn estimator_by_name(name: &str) -> Result<EstimatorKind, CliError> {
    let defaults = config::default_estimators();
    match name {
        "edp" => Ok(defaults[0].clone()),
        "edp_missing" => match defaults[0].clone() {
            EstimatorKind::Edp { sampler, stride, population, .. } => {
                Ok(EstimatorKind::Edp { sampler, stride, population, missing: true })
            }
            _ => unreachable!("first default estimator is the EDP"),
        },
        "parametric_bayes" => Ok(defaults[1].clone()),
        "iptw" => Ok(defaults[2].clone()),
        other => Err(CliError::Usage(format!(
            "--estimator: unknown estimator `{other}` (expected iptw, parametric_bayes, edp or edp_missing)"
        ))),
    }
}

fn apply_effect_args(cfg: &mut RunConfig, args: &EffectArgs) -> Result<(), CliError> {
    for name in &args.estimands {
        let f: Functional = name.parse().map_err(|e: edpcausal::Error| CliError::Usage(format!("--estimand: {e}")))?;
        cfg.effects.push(EffectQuery::new(f));
    }
    if let Some(s) = args.stride {
        cfg.effect_settings.stride = s;
    }
    if let Some(p) = args.population {
        for q in &mut cfg.effects {
            q.population = p;
        }
    }
    Ok(())
}

/// Config file, then flags; seeds are resolved last.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.common.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let c = &cli.common;
    if let Some(v) = &c.data {
        cfg.paths.data = Some(v.clone());
    }
    if let Some(v) = &c.schema {
        cfg.paths.schema = Some(v.clone());
    }
    if let Some(v) = &c.outcome {
        cfg.paths.outcome = v.clone();
    }
    if let Some(v) = &c.treatment {
        cfg.paths.treatment = v.clone();
    }
    if let Some(v) = &c.output {
        cfg.paths.output = v.clone();
    }
    if let Some(v) = &c.draws {
        cfg.paths.draws = Some(v.clone());
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.workers {
        cfg.workers = Some(v);
    }
    match &cli.command {
        Command::Fit { chains, iterations, burn_in, thin } => {
            let s = &mut cfg.sampler;
            for (slot, v) in [(&mut s.chains, chains), (&mut s.iterations, iterations), (&mut s.burn_in, burn_in), (&mut s.thin, thin)] {
                if let Some(v) = v {
                    *slot = *v;
                }
            }
        }
        Command::Effects(a) | Command::Diagnose(a) => apply_effect_args(&mut cfg, a)?,
        Command::Simulate { scenario, n, replicates, estimators, write_data } => {
            let b = &mut cfg.benchmark;
            if let Some(v) = scenario {
                b.scenario = *v;
            }
            if let Some(v) = n {
                b.n = *v;
            }
            if let Some(v) = replicates {
                b.replicates = *v;
            }
            if !estimators.is_empty() {
                b.estimators = estimators.iter().map(|e| estimator_by_name(e)).collect::<Result<_, _>>()?;
            }
            b.write_data |= *write_data;
        }
    }
    if cfg.workers == Some(0) {
        return Err(CliError::Usage("workers must be at least 1".into()));
    }
    cfg.resolve_seeds();
    Ok(cfg)
}

/// Runs one parsed invocation inside a worker pool of the configured size.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = effective_config(cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Fit { .. } => commands::cmd_fit(&cfg),
        Command::Effects(_) => commands::cmd_effects(&cfg),
        Command::Simulate { .. } => commands::cmd_simulate(&cfg),
        Command::Diagnose(_) => commands::cmd_diagnose(&cfg),
    })
}

/// Parses arguments, runs, prints, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(msg) => {
            if !msg.is_empty() {
                println!("{msg}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
