//! Simulation scenarios, missingness mechanisms, baseline estimators and
//! replicate-level evaluation.

mod baselines;
mod metrics;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use baselines::{
    edp_estimate, iptw_estimate, parametric_bayes_estimate, BayesSettings, Estimand, Estimate, EstimatorKind,
    EstimatorOutput, IptwSettings,
};
pub use metrics::{
    evaluate_replicates, metrics_from_estimates, read_benchmark, write_benchmark, BenchmarkRow, ReplicateMetrics,
};

use crate::data::{CovariateSpec, Dataset, VariableKind, VariableSchema};
use crate::error::{Error, Result};
use crate::math::logistic;
use crate::rng::{purpose, stream};

pub const MIN_N: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: u8,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub missing: bool,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.scenario) {
            return Err(Error::Validation(format!("scenario must be 1-4, got {}", self.scenario)));
        }
        if self.n < MIN_N {
            return Err(Error::Validation(format!("n must be at least {MIN_N}, got {}", self.n)));
        }
        if self.missing && self.scenario > 2 {
            return Err(Error::Validation(format!(
                "scenario {} has no missingness mechanism",
                self.scenario
            )));
        }
        Ok(())
    }

    pub fn binary_outcome(&self) -> bool {
        self.scenario <= 2
    }
}

/// True causal parameters of a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub psi_rr: Option<f64>,
    /// Risk difference (binary outcome) or mean difference (continuous).
    pub psi_diff: Option<f64>,
}

impl Truth {
    /// Values as published with the scenarios.
    pub fn printed(scenario: u8) -> Truth {
        match scenario {
            1 => Truth { psi_rr: Some(1.5), psi_diff: Some(0.13) },
            2 => Truth { psi_rr: Some(1.4), psi_diff: Some(0.155) },
            _ => Truth { psi_rr: None, psi_diff: Some(1.503) },
        }
    }

    /// Values of the potential-outcome Monte Carlo oracle with 10^7 draws
    /// (`monte_carlo_truth(s, 10_000_000, 2024)`), frozen.
    pub fn oracle(scenario: u8) -> Truth {
        match scenario {
            1 => Truth { psi_rr: Some(ORACLE_S1.0), psi_diff: Some(ORACLE_S1.1) },
            2 => Truth { psi_rr: Some(ORACLE_S2.0), psi_diff: Some(ORACLE_S2.1) },
            3 => Truth { psi_rr: None, psi_diff: Some(ORACLE_S3) },
            _ => Truth { psi_rr: None, psi_diff: Some(ORACLE_S4) },
        }
    }

    /// Truth used to score replicates: printed values unless the oracle
    /// disagrees by more than 0.01.
    pub fn benchmark(scenario: u8) -> Truth {
        let (p, o) = (Truth::printed(scenario), Truth::oracle(scenario));
        let pick = |p: Option<f64>, o: Option<f64>| match (p, o) {
            (Some(p), Some(o)) if (p - o).abs() > TRUTH_TOLERANCE => Some(o),
            (p, _) => p,
        };
        Truth {
            psi_rr: pick(p.psi_rr, o.psi_rr),
            psi_diff: pick(p.psi_diff, o.psi_diff),
        }
    }
}

pub const TRUTH_TOLERANCE: f64 = 0.01;
pub const ORACLE_DRAWS: usize = 10_000_000;
pub const ORACLE_SEED: u64 = 2024;
const ORACLE_S1: (f64, f64) = (1.544_450_352_429_604_7, 0.121_228_606_308_528_16);
const ORACLE_S2: (f64, f64) = (1.402_740_492_505_200_3, 0.155_075_601_382_349_38);
const ORACLE_S3: f64 = 1.503_214_770_181_863_2;
const ORACLE_S4: f64 = 1.503_264_803_497_137;

fn covariates(binary: usize, continuous: usize, offset: usize) -> Vec<CovariateSpec> {
    (0..binary)
        .map(|r| CovariateSpec::binary(format!("l{}", r + offset)))
        .chain((0..continuous).map(|r| CovariateSpec::continuous(format!("l{}", binary + r + offset))))
        .collect()
}

pub fn scenario_schema(scenario: u8) -> Result<VariableSchema> {
    let (kind, covs) = match scenario {
        1 => (VariableKind::Binary, covariates(2, 2, 1)),
        2 => (VariableKind::Binary, vec![CovariateSpec::continuous("l")]),
        3 => (VariableKind::Continuous, covariates(0, 4, 1)),
        4 => (VariableKind::Continuous, covariates(40, 44, 1)),
        s => return Err(Error::Validation(format!("scenario must be 1-4, got {s}"))),
    };
    VariableSchema::new("y", kind, "a", 2, covs)
}

fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    f64::from(u8::from(rng.random::<f64>() < p))
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Equicorrelated standard normals: `sqrt(rho) z0 + sqrt(1 - rho) z_j`.
fn equicorrelated<R: Rng + ?Sized>(out: &mut [f64], rho: f64, rng: &mut R) {
    let common = normal(rng) * rho.sqrt();
    let own = (1.0 - rho).sqrt();
    for x in out {
        *x = common + own * normal(rng);
    }
}

/// Two-bump weight `exp{-2(x-c1)^2} / (exp{-2(x-c1)^2} + exp{-2(x-c2)^2})`
/// with equal prefactors.
fn bump_weight(x: f64, c1: f64, c2: f64) -> f64 {
    // Ratio form: 1 / (1 + exp{-2(x-c2)^2 + 2(x-c1)^2}).
    logistic(2.0 * (x - c2).powi(2) - 2.0 * (x - c1).powi(2))
}

/// Scenario-1 covariates `(l1, l2, l3, l4)`.
fn s1_covariates<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
    let l1 = bernoulli(0.2, rng);
    let l2 = bernoulli(logistic(0.3 + 0.2 * l1), rng);
    let l3 = l1 - l2 + normal(rng);
    let l4 = 1.0 + 0.5 * l1 + 0.2 * l2 - 0.3 * l3 + 2.0 * normal(rng);
    [l1, l2, l3, l4]
}

fn s1_propensity(l: &[f64]) -> f64 {
    logistic(-0.4 + l[0] + l[1] + l[2] - 0.4 * l[3])
}

/// `P(Y = 1 | A = a, L = l)` in scenario 1.
pub fn s1_outcome_mean(a: f64, l: &[f64]) -> f64 {
    logistic(-0.5 + 0.78 * a - 0.5 * l[0] - 0.3 * l[1] + 0.5 * l[2] - 0.5 * l[3])
}

fn s2_covariate<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    4.0 + 2.0 * normal(rng)
}

fn s2_propensity(l: f64) -> f64 {
    logistic(1.3 - 0.8 * l)
}

/// Mixing weight `p(L)` of scenario 2.
pub fn s2_mixing_weight(l: f64) -> f64 {
    bump_weight(l, 4.0, 6.0)
}

/// `P(Y = 1 | A = a, L = l)` in scenario 2.
pub fn s2_outcome_mean(a: f64, l: f64) -> f64 {
    let p = s2_mixing_weight(l);
    p * logistic(-0.8 - 0.1 * l + a) + (1.0 - p) * logistic(-2.0 + 0.45 * l)
}

/// Shared by scenarios 3 and 4: `(p, mu1, mu2)` from the four confounders
/// `(x1, x2, x3, x4)` that drive the outcome.
pub fn s34_outcome_parts(a: f64, x: [f64; 4]) -> (f64, f64, f64) {
    let p = bump_weight(x[0], -1.0, 2.0);
    let mu1 = -4.0 + 2.0 * a - 0.5 * x[1] - x[2] + 0.5 * x[3];
    let mu2 = 4.0 + 0.4 * a + 0.5 * x[1] * x[1] - 0.8 * x[2] * f64::from(u8::from(x[2] > 0.0));
    (p, mu1, mu2)
}

pub fn s34_outcome_mean(a: f64, x: [f64; 4]) -> f64 {
    let (p, mu1, mu2) = s34_outcome_parts(a, x);
    p * mu1 + (1.0 - p) * mu2
}

fn s34_outcome<R: Rng + ?Sized>(a: f64, x: [f64; 4], rng: &mut R) -> f64 {
    let (p, mu1, mu2) = s34_outcome_parts(a, x);
    if rng.random::<f64>() < p {
        mu1 + normal(rng)
    } else {
        mu2 + 4.0 * normal(rng)
    }
}

fn s3_propensity(l: &[f64]) -> f64 {
    logistic(0.3 * l.iter().sum::<f64>())
}

/// Scenario-4 treatment probability from `(l41, l42, l43, l44)`.
fn s4_propensity(x: [f64; 4]) -> f64 {
    let lambda = bump_weight(x[1], -1.0, 2.0);
    let inner = lambda * logistic(0.6 * x[0] * x[1] - 0.2 * x[2] * x[2])
        + (1.0 - lambda) * logistic(0.7 * x[0] - 0.4 * x[2] * x[3]);
    logistic(inner)
}

/// Draws covariates of one subject into `l`, returning the propensity.
fn draw_covariates<R: Rng + ?Sized>(scenario: u8, l: &mut [f64], rng: &mut R) -> f64 {
    match scenario {
        1 => {
            l.copy_from_slice(&s1_covariates(rng));
            s1_propensity(l)
        }
        2 => {
            l[0] = s2_covariate(rng);
            s2_propensity(l[0])
        }
        3 => {
            equicorrelated(l, 0.3, rng);
            s3_propensity(l)
        }
        _ => {
            for x in &mut l[..40] {
                *x = bernoulli(0.5, rng);
            }
            equicorrelated(&mut l[40..], 0.3, rng);
            s4_propensity([l[40], l[41], l[42], l[43]])
        }
    }
}

fn s34_drivers(scenario: u8, l: &[f64]) -> [f64; 4] {
    let o = if scenario == 3 { 0 } else { 40 };
    [l[o], l[o + 1], l[o + 2], l[o + 3]]
}

fn draw_outcome<R: Rng + ?Sized>(scenario: u8, a: f64, l: &[f64], rng: &mut R) -> f64 {
    match scenario {
        1 => bernoulli(s1_outcome_mean(a, l), rng),
        2 => {
            // Mixture: pick the component, then the Bernoulli.
            let p = s2_mixing_weight(l[0]);
            let mean = if rng.random::<f64>() < p {
                logistic(-0.8 - 0.1 * l[0] + a)
            } else {
                logistic(-2.0 + 0.45 * l[0])
            };
            bernoulli(mean, rng)
        }
        s => s34_outcome(a, s34_drivers(s, l), rng),
    }
}

fn outcome_mean(scenario: u8, a: f64, l: &[f64]) -> f64 {
    match scenario {
        1 => s1_outcome_mean(a, l),
        2 => s2_outcome_mean(a, l[0]),
        s => s34_outcome_mean(a, s34_drivers(s, l)),
    }
}

/// Complete data of one scenario, drawn as printed.
pub fn generate_complete<R: Rng + ?Sized>(scenario: u8, n: usize, rng: &mut R) -> Result<Dataset> {
    let schema = scenario_schema(scenario)?;
    let p = schema.p();
    let mut y = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut l = vec![0.0; n * p];
    for i in 0..n {
        let row = &mut l[i * p..(i + 1) * p];
        let e = draw_covariates(scenario, row, rng);
        let ai = bernoulli(e, rng);
        y.push(draw_outcome(scenario, ai, row, rng));
        a.push(ai as usize);
    }
    Dataset::from_parts(schema, y, a, l, vec![false; n * p])
}

/// Missingness probabilities of each covariate of one row.
fn missing_probs(scenario: u8, y: f64, a: f64, l: &[f64]) -> Vec<f64> {
    match scenario {
        1 => vec![
            logistic(-2.0 + l[1] + y),
            logistic(2.0 + l[2] + a),
            logistic(-1.5 - a + y),
            logistic(-0.9 - l[0] - l[1]),
        ],
        _ => vec![logistic(-2.0 + a + y)],
    }
}

/// Masks covariate entries by the scenario's logistic missingness models,
/// evaluated on the complete values.
pub fn apply_missingness<R: Rng + ?Sized>(scenario: u8, d: &Dataset, rng: &mut R) -> Result<Dataset> {
    if !(1..=2).contains(&scenario) {
        return Err(Error::Validation(format!("scenario {scenario} has no missingness mechanism")));
    }
    let p = d.p();
    let mut mask = vec![false; d.n() * p];
    for i in 0..d.n() {
        let probs = missing_probs(scenario, d.y()[i], d.a()[i] as f64, d.row(i));
        for (r, pr) in probs.into_iter().enumerate() {
            let pr = if pr.is_nan() { 0.0 } else { pr.clamp(0.0, 1.0) };
            mask[i * p + r] = rng.random::<f64>() < pr;
        }
    }
    d.with_additional_missing(&mask)
}

/// Data of one replicate: complete data from the `GENERATE` stream and,
/// when requested, missingness from the `MISSINGNESS` stream.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<(Dataset, Truth)> {
    spec.validate()?;
    let complete = generate_complete(spec.scenario, spec.n, &mut stream(spec.seed, &[purpose::GENERATE]))?;
    let data = if spec.missing {
        apply_missingness(spec.scenario, &complete, &mut stream(spec.seed, &[purpose::MISSINGNESS]))?
    } else {
        complete
    };
    Ok((data, Truth::benchmark(spec.scenario)))
}

/// `E(Y^1)`, `E(Y^0)` by averaging the outcome regression over `draws`
/// covariate vectors from the scenario's marginal.
pub fn potential_outcome_means(scenario: u8, draws: usize, seed: u64) -> Result<(f64, f64)> {
    let p = scenario_schema(scenario)?.p();
    let mut rng = stream(seed, &[purpose::GENERATE, u64::from(scenario)]);
    let mut l = vec![0.0; p];
    let (mut s1, mut s0) = (0.0, 0.0);
    for _ in 0..draws {
        draw_covariates(scenario, &mut l, &mut rng);
        s1 += outcome_mean(scenario, 1.0, &l);
        s0 += outcome_mean(scenario, 0.0, &l);
    }
    Ok((s1 / draws as f64, s0 / draws as f64))
}

pub fn monte_carlo_truth(scenario: u8, draws: usize, seed: u64) -> Result<Truth> {
    let (m1, m0) = potential_outcome_means(scenario, draws, seed)?;
    Ok(if scenario <= 2 {
        Truth { psi_rr: Some(m1 / m0), psi_diff: Some(m1 - m0) }
    } else {
        Truth { psi_rr: None, psi_diff: Some(m1 - m0) }
    })
}

/// Synthetic cohort shaped like an observational HIV/HCV study: binary
/// death outcome, binary regimen, 13 mixed covariates, about 5% of rows
/// with at least one missing laboratory value.
pub fn generate_cohort<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    let binary = ["black", "diabetes", "alcohol", "drug_use", "hepatotoxic_arv"];
    let continuous = ["age", "bmi", "year", "log_cd4", "log_rna", "log_alt", "log_ast", "log_fib4"];
    let covs: Vec<CovariateSpec> = binary
        .iter()
        .map(|s| CovariateSpec::binary(*s))
        .chain(continuous.iter().map(|s| CovariateSpec::continuous(*s)))
        .collect();
    let schema = VariableSchema::new("death", VariableKind::Binary, "mtnrti", 2, covs)?;
    let p = schema.p();
    let mut y = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let black = bernoulli(0.5, rng);
        let diabetes = bernoulli(0.15, rng);
        let alcohol = bernoulli(0.35, rng);
        let drug = bernoulli(0.45, rng);
        let hepatotoxic = bernoulli(0.2, rng);
        let age = 47.0 + 8.0 * normal(rng);
        let bmi = 25.0 + 4.0 * normal(rng);
        let year = 2002.0 + f64::from(rng.random_range(0u8..8));
        let log_cd4 = 5.3 + 0.8 * normal(rng);
        let log_rna = 4.3 + 1.0 * normal(rng);
        let log_alt = 3.6 + 0.5 * normal(rng);
        let log_ast = 0.3 + 0.85 * log_alt + 0.4 * normal(rng);
        let log_fib4 = 0.2 + 0.02 * (age - 47.0) + 0.5 * (log_ast - log_alt) + 0.5 * normal(rng);
        // Regimen use falls steeply over calendar time.
        let e = logistic(2.2 - 0.6 * (year - 2002.0) + 0.2 * black - 0.2 * (log_cd4 - 5.3));
        let ai = bernoulli(e, rng);
        let eta = -2.6 + 0.15 * ai + 0.04 * (age - 47.0) - 0.5 * (log_cd4 - 5.3) + 0.5 * log_fib4 + 0.3 * diabetes
            + 0.3 * drug;
        y.push(bernoulli(logistic(eta), rng));
        a.push(ai as usize);
        let mut row: Vec<Option<f64>> = [
            black, diabetes, alcohol, drug, hepatotoxic, age, bmi, year, log_cd4, log_rna, log_alt, log_ast,
            log_fib4,
        ]
        .into_iter()
        .map(Some)
        .collect();
        // Laboratory gaps: ALT, AST, CD4, FIB-4 in proportion 1.3 : 2.5 : 1.8 : 3.1.
        if rng.random::<f64>() < 0.048 {
            let targets = [(10usize, 1.3), (11, 2.5), (8, 1.8), (12, 3.1)];
            let total: f64 = targets.iter().map(|t| t.1).sum();
            let mut any = false;
            for &(idx, w) in &targets {
                if rng.random::<f64>() < w / total {
                    row[idx] = None;
                    any = true;
                }
            }
            if !any {
                let mut u = rng.random::<f64>() * total;
                for &(idx, w) in &targets {
                    if u < w {
                        row[idx] = None;
                        break;
                    }
                    u -= w;
                }
            }
        }
        debug_assert_eq!(row.len(), p);
        rows.push(row);
    }
    Dataset::new(schema, y, a, rows)
}
