//! Run configuration: a TOML file whose every field has a default, plus
//! command-line overrides applied on top.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use edpcausal::effects::{EffectQuery, EffectSettings};
use edpcausal::sim::EstimatorKind;
use edpcausal::{CovariateSpec, Dataset, PriorSpec, SamplerConfig, VariableKind, VariableSchema};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Effective configuration of one invocation.
///
/// The top-level `seed` is the single source of randomness: it overwrites
/// `sampler.seed` and `effect_settings.seed` during resolution so that the
/// echoed file is self-consistent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub paths: Paths,
    pub sampler: SamplerConfig,
    pub prior: PriorOverrides,
    pub effect_settings: EffectSettings,
    pub effects: Vec<EffectQuery>,
    pub benchmark: BenchmarkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: None,
            paths: Paths::default(),
            sampler: SamplerConfig::default(),
            prior: PriorOverrides::default(),
            effect_settings: EffectSettings::default(),
            effects: Vec::new(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// JSON variable schema. When absent the schema is inferred from the
    /// data: columns whose observed values are all 0 or 1 are binary.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// Outcome and treatment column names used by schema inference.
    pub outcome: String,
    pub treatment: String,
    pub output: PathBuf,
    /// Posterior draws read by `effects` and `diagnose`; defaults to
    /// `<output>/draws.json`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: None,
            schema: None,
            outcome: "y".into(),
            treatment: "a".into(),
            output: PathBuf::from("edpcausal-out"),
            draws: None,
        }
    }
}

impl Paths {
    pub fn draws_path(&self) -> PathBuf {
        self.draws.clone().unwrap_or_else(|| self.output.join(crate::commands::DRAWS_FILE))
    }
}

/// Hyperparameters that replace the empirical-Bayes defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau2_beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau2_0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2_0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_shape: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_rate: Option<f64>,
}

impl PriorOverrides {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// Resolves the prior on standardized data. `None` when nothing is
    /// overridden, leaving the choice to the sampler.
    pub fn resolve(&self, standardized: &Dataset) -> Result<Option<PriorSpec>, CliError> {
        if self.is_empty() {
            return Ok(None);
        }
        let mut p = match &self.beta0 {
            Some(b) => PriorSpec::with_beta0(edpcausal::ModelDims::from_schema(standardized.schema()), b.clone()),
            None => PriorSpec::from_data(standardized),
        }
        .map_err(CliError::config)?;
        let fields: [(&mut f64, Option<f64>); 11] = [
            (&mut p.tau2_beta, self.tau2_beta),
            (&mut p.a_x, self.a_x),
            (&mut p.b_x, self.b_x),
            (&mut p.nu0, self.nu0),
            (&mut p.tau2_0, self.tau2_0),
            (&mut p.c0, self.c0),
            (&mut p.mu0, self.mu0),
            (&mut p.nu_sigma, self.nu_sigma),
            (&mut p.sigma2_0, self.sigma2_0),
            (&mut p.alpha_shape, self.alpha_shape),
            (&mut p.alpha_rate, self.alpha_rate),
        ];
        for (slot, v) in fields {
            if let Some(v) = v {
                *slot = v;
            }
        }
        p.validate().map_err(CliError::config)?;
        Ok(Some(p))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub scenario: u8,
    pub n: usize,
    pub replicates: usize,
    pub estimators: Vec<EstimatorKind>,
    /// Also write a dataset drawn with the run seed (`data.csv`, plus
    /// `data_missing.csv` for scenarios with missingness) and its schema.
    pub write_data: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            scenario: 1,
            n: 250,
            replicates: 100,
            estimators: default_estimators(),
            write_data: false,
        }
    }
}

pub fn default_estimators() -> Vec<EstimatorKind> {
    vec![
        EstimatorKind::Edp {
            sampler: SamplerConfig::default(),
            stride: 100,
            population: 1000,
            missing: false,
        },
        EstimatorKind::ParametricBayes { burn_in: 1000, draws: 4000 },
        EstimatorKind::Iptw { bootstrap: 200 },
    ]
}

/// Parses a config file; unknown keys are rejected with their name.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config `{}`: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config `{}`: {e}", path.display())))
}

impl RunConfig {
    /// Pushes the top-level seed into every sub-configuration.
    pub fn resolve_seeds(&mut self) {
        self.sampler.seed = self.seed;
        self.effect_settings.seed = self.seed;
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Runtime(format!("cannot serialize config: {e}")))
    }

    /// Data path, required by `fit`.
    pub fn data_path(&self) -> Result<&Path, CliError> {
        let p = self
            .paths
            .data
            .as_deref()
            .ok_or_else(|| CliError::Usage("paths.data: no data file given (use --data or set it in the config)".into()))?;
        if !p.is_file() {
            return Err(CliError::Usage(format!("paths.data: `{}` does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn schema(&self, data: &Path) -> Result<VariableSchema, CliError> {
        match &self.paths.schema {
            Some(s) => {
                let text = std::fs::read_to_string(s)
                    .map_err(|e| CliError::Usage(format!("paths.schema: cannot read `{}`: {e}", s.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("paths.schema: invalid schema `{}`: {e}", s.display())))
            }
            None => infer_schema(data, &self.paths.outcome, &self.paths.treatment),
        }
    }
}

/// Builds a schema from the CSV header and values. Binary columns contain
/// only 0 and 1 among their non-empty cells; treatment levels are
/// `max + 1`.
pub fn infer_schema(path: &Path, outcome: &str, treatment: &str) -> Result<VariableSchema, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("paths.data: cannot read `{}`: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Usage(format!("paths.data: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut unique = HashSet::new();
    for h in &headers {
        if !unique.insert(h.as_str()) {
            return Err(CliError::Usage(format!("paths.data: duplicate column `{h}`")));
        }
    }
    for (field, name) in [("paths.outcome", outcome), ("paths.treatment", treatment)] {
        if !headers.iter().any(|h| h == name) {
            return Err(CliError::Usage(format!("{field}: column `{name}` not found in the data header")));
        }
    }
    let mut binary = vec![true; headers.len()];
    let mut max = vec![f64::NEG_INFINITY; headers.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("paths.data: {e}")))?;
        for (c, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Usage(format!("paths.data: row {}: `{cell}` in column `{}` is not a number", row + 1, headers[c]))
            })?;
            binary[c] &= v == 0.0 || v == 1.0;
            max[c] = max[c].max(v);
        }
    }
    let kind = |c: usize| if binary[c] { VariableKind::Binary } else { VariableKind::Continuous };
    let mut outcome_kind = VariableKind::Continuous;
    let mut levels = 2;
    let mut covariates = Vec::new();
    for (c, h) in headers.iter().enumerate() {
        if h == outcome {
            outcome_kind = kind(c);
        } else if h == treatment {
            levels = (max[c].max(1.0) as usize) + 1;
        } else {
            covariates.push(CovariateSpec { name: h.clone(), kind: kind(c) });
        }
    }
    VariableSchema::new(outcome, outcome_kind, treatment, levels, covariates).map_err(CliError::config)
}
