//! Baseline estimators (IPTW, single-cluster Bayesian GLM) and the EDP
//! estimator wrapped for replicate evaluation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{standardize_continuous, Dataset, VariableKind};
use crate::effects::{compute_effects, EffectQuery, EffectSettings, Functional};
use crate::error::{Error, Result};
use crate::kernels::{logistic_irls, update_outcome_params, MhTuner, Observations, OutcomeParams, PriorSpec};
use crate::math::quantile_sorted;
use crate::rng::{purpose, stream};
use crate::sampler::{fit, SamplerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// `E(Y^1) / E(Y^0)`.
    RelativeRisk,
    /// `E(Y^1) - E(Y^0)`.
    Difference,
}

impl Estimand {
    fn of(self, m1: f64, m0: f64) -> f64 {
        match self {
            Estimand::RelativeRisk => m1 / m0,
            Estimand::Difference => m1 - m0,
        }
    }
}

/// Point estimate with a 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimand: Estimand,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutput {
    pub estimates: Vec<Estimate>,
    /// Largest stabilized IPTW weight.
    pub max_weight: Option<f64>,
    /// Post-burn-in MH acceptance of the Bayesian GLM.
    pub acceptance: Option<f64>,
    pub warning: Option<String>,
}

fn percentile_interval(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    (quantile_sorted(values, 0.025), quantile_sorted(values, 0.975))
}

fn require_complete_binary_treatment(d: &Dataset) -> Result<()> {
    if d.schema().treatment_levels() != 2 {
        return Err(Error::Validation("baseline estimators need a binary treatment".into()));
    }
    if d.missing_count() > 0 {
        return Err(Error::Validation("baseline estimators need complete covariates".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IptwSettings {
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for IptwSettings {
    fn default() -> Self {
        Self { bootstrap: 200, seed: 1 }
    }
}

/// Weighted arm means and the largest weight, or `None` on an IRLS failure.
fn iptw_arms(d: &Dataset, rows: &[usize]) -> Result<(f64, f64, f64)> {
    let p = d.p();
    let n = rows.len();
    let x = DMatrix::from_fn(n, p + 1, |k, c| if c == 0 { 1.0 } else { d.row(rows[k])[c - 1] });
    let t = DVector::from_iterator(n, rows.iter().map(|&i| d.a()[i] as f64));
    let fit = logistic_irls(&x, &t)?;
    let beta = DVector::from_vec(fit.beta);
    let eta = &x * beta;
    let p_treated = t.sum() / n as f64;
    let (mut sw1, mut swy1, mut sw0, mut swy0, mut max_w) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    for (k, &i) in rows.iter().enumerate() {
        let e = crate::math::logistic(eta[k]);
        let y = d.y()[i];
        if d.a()[i] == 1 {
            let w = p_treated / e;
            sw1 += w;
            swy1 += w * y;
            max_w = max_w.max(w);
        } else {
            let w = (1.0 - p_treated) / (1.0 - e);
            sw0 += w;
            swy0 += w * y;
            max_w = max_w.max(w);
        }
    }
    if sw1 == 0.0 || sw0 == 0.0 {
        return Err(Error::Insufficient("an arm has no subjects".into()));
    }
    Ok((swy1 / sw1, swy0 / sw0, max_w))
}

/// Stabilized inverse-probability weights from an additive logistic
/// propensity model, Hajek means per arm, percentile bootstrap intervals.
pub fn iptw_estimate(d: &Dataset, estimands: &[Estimand], settings: IptwSettings) -> Result<EstimatorOutput> {
    require_complete_binary_treatment(d)?;
    let all: Vec<usize> = (0..d.n()).collect();
    let (m1, m0, max_weight) = iptw_arms(d, &all)?;
    let mut boot: Vec<Vec<f64>> = vec![Vec::with_capacity(settings.bootstrap); estimands.len()];
    let mut failures = 0;
    let mut rows = vec![0; d.n()];
    for b in 0..settings.bootstrap {
        let mut rng = stream(settings.seed, &[purpose::BOOTSTRAP, b as u64]);
        for r in rows.iter_mut() {
            *r = rng.random_range(0..d.n());
        }
        match iptw_arms(d, &rows) {
            Ok((b1, b0, _)) => {
                for (e, out) in estimands.iter().zip(boot.iter_mut()) {
                    out.push(e.of(b1, b0));
                }
            }
            Err(_) => failures += 1,
        }
    }
    if settings.bootstrap > 0 && 2 * failures > settings.bootstrap {
        return Err(Error::Insufficient(format!(
            "{failures} of {} bootstrap propensity fits failed",
            settings.bootstrap
        )));
    }
    let estimates = estimands
        .iter()
        .zip(boot.iter_mut())
        .map(|(&e, values)| {
            let point = e.of(m1, m0);
            let (lower, upper) = if values.len() >= 2 { percentile_interval(values) } else { (point, point) };
            Estimate { estimand: e, point, lower, upper }
        })
        .collect();
    Ok(EstimatorOutput {
        estimates,
        max_weight: Some(max_weight),
        acceptance: None,
        warning: (failures > 0).then(|| format!("{failures} bootstrap resamples failed")),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesSettings {
    pub burn_in: usize,
    pub draws: usize,
    pub seed: u64,
}

impl Default for BayesSettings {
    fn default() -> Self {
        Self { burn_in: 1000, draws: 4000, seed: 1 }
    }
}

/// Single-cluster Bayesian GLM with the EDP base-measure prior on the
/// coefficients; effects by g-computation over the empirical covariates.
pub fn parametric_bayes_estimate(
    d: &Dataset,
    estimands: &[Estimand],
    settings: BayesSettings,
) -> Result<EstimatorOutput> {
    require_complete_binary_treatment(d)?;
    if settings.draws < 2 {
        return Err(Error::Insufficient("need at least 2 posterior draws".into()));
    }
    let (std, _) = standardize_continuous(d)?;
    let prior = PriorSpec::from_data(&std)?;
    let obs = Observations {
        y: std.y(),
        a: std.a(),
        l: std.l(),
        p: std.p(),
    };
    let members: Vec<usize> = (0..std.n()).collect();
    let mut theta = OutcomeParams {
        beta: prior.beta0.clone(),
        sigma2: match prior.dims.outcome {
            VariableKind::Binary => None,
            VariableKind::Continuous => Some(prior.sigma2_0),
        },
    };
    let mut tuner = MhTuner::new(prior.dims.design_dim());
    let mut rng = stream(settings.seed, &[purpose::BASELINE]);
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(settings.draws); estimands.len()];
    for t in 0..settings.burn_in + settings.draws {
        theta = update_outcome_params(&obs, &members, &theta, &prior, &mut tuner, &mut rng);
        if t < settings.burn_in {
            tuner.adapt();
            continue;
        }
        if t == settings.burn_in {
            tuner.stop_adapting();
        }
        let (mut s1, mut s0) = (0.0, 0.0);
        for i in 0..obs.n() {
            s1 += theta.mean(1, obs.row(i));
            s0 += theta.mean(0, obs.row(i));
        }
        let n = obs.n() as f64;
        for (e, out) in estimands.iter().zip(values.iter_mut()) {
            out.push(e.of(s1 / n, s0 / n));
        }
    }
    let acceptance = (tuner.proposed > 0).then(|| tuner.acceptance_rate());
    let warning = acceptance
        .filter(|r| !(0.05..=0.95).contains(r))
        .map(|r| format!("MH acceptance {r:.3} outside (0.05, 0.95); chain may not mix"));
    let estimates = estimands
        .iter()
        .zip(values.iter_mut())
        .map(|(&e, v)| {
            let (lower, upper) = percentile_interval(v);
            Estimate { estimand: e, point: quantile_sorted(v, 0.5), lower, upper }
        })
        .collect();
    Ok(EstimatorOutput {
        estimates,
        max_weight: None,
        acceptance,
        warning,
    })
}

/// Fits the EDP model and reads the posterior median and interval of each
/// estimand off the strided effect draws.
pub fn edp_estimate(
    d: &Dataset,
    estimands: &[Estimand],
    config: &SamplerConfig,
    effects: EffectSettings,
    population: usize,
) -> Result<EstimatorOutput> {
    let post = fit(d, config, None)?;
    let queries: Vec<EffectQuery> = estimands
        .iter()
        .map(|e| {
            let mut q = EffectQuery::new(match e {
                Estimand::RelativeRisk => Functional::RelativeRisk,
                Estimand::Difference => Functional::MeanDifference,
            });
            q.population = population;
            q
        })
        .collect();
    let out = compute_effects(&post, &queries, effects)?;
    let estimates = estimands
        .iter()
        .zip(&out)
        .map(|(&e, est)| Estimate { estimand: e, point: est.median, lower: est.lower, upper: est.upper })
        .collect();
    let acceptance = post.chains.iter().filter_map(|c| c.stats.beta_acceptance()).reduce(f64::min);
    Ok(EstimatorOutput {
        estimates,
        max_weight: None,
        acceptance,
        warning: None,
    })
}

/// An estimator configuration as used by the benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorKind {
    Iptw {
        #[serde(default = "default_bootstrap")]
        bootstrap: usize,
    },
    ParametricBayes {
        #[serde(default = "default_pb_burn_in")]
        burn_in: usize,
        #[serde(default = "default_pb_draws")]
        draws: usize,
    },
    Edp {
        #[serde(default)]
        sampler: SamplerConfig,
        /// Effect-draw stride over retained draws.
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default = "default_population")]
        population: usize,
        /// Fit the data with the scenario's missingness applied.
        #[serde(default)]
        missing: bool,
    },
}

fn default_bootstrap() -> usize {
    200
}
fn default_pb_burn_in() -> usize {
    1000
}
fn default_pb_draws() -> usize {
    4000
}
fn default_stride() -> usize {
    100
}
fn default_population() -> usize {
    1000
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Iptw { .. } => "iptw",
            EstimatorKind::ParametricBayes { .. } => "parametric_bayes",
            EstimatorKind::Edp { missing: false, .. } => "edp",
            EstimatorKind::Edp { missing: true, .. } => "edp_missing",
        }
    }

    pub fn uses_missing_data(&self) -> bool {
        matches!(self, EstimatorKind::Edp { missing: true, .. })
    }

    /// Runs on `complete` or, for the missing-data variant, `masked`.
    pub fn run(&self, complete: &Dataset, masked: &Dataset, estimands: &[Estimand], seed: u64) -> Result<EstimatorOutput> {
        match self {
            EstimatorKind::Iptw { bootstrap } => iptw_estimate(
                complete,
                estimands,
                IptwSettings { bootstrap: *bootstrap, seed },
            ),
            EstimatorKind::ParametricBayes { burn_in, draws } => parametric_bayes_estimate(
                complete,
                estimands,
                BayesSettings { burn_in: *burn_in, draws: *draws, seed },
            ),
            EstimatorKind::Edp { sampler, stride, population, missing } => {
                let config = SamplerConfig { seed, ..sampler.clone() };
                let data = if *missing { masked } else { complete };
                edp_estimate(data, estimands, &config, EffectSettings { stride: *stride, seed }, *population)
            }
        }
    }
}
