//! Replicate-level metrics: bias, empirical SD, coverage and interval width.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{Estimand, Estimate, EstimatorKind};
use super::{apply_missingness, generate_complete, ScenarioSpec, Truth};
use crate::error::{Error, Result};
use crate::math::{mean, sample_variance};
use crate::rng::{derive_seed, purpose, stream};

/// Aggregate performance of one estimator on one estimand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub estimator: String,
    pub estimand: Estimand,
    pub truth: f64,
    /// Replicates that produced an estimate.
    pub replicates: usize,
    pub failures: usize,
    /// Mean point estimate minus truth (signed).
    pub bias: f64,
    pub abs_bias: f64,
    /// Standard deviation of the point estimates.
    pub esd: f64,
    pub coverage: f64,
    pub width: f64,
}

pub fn metrics_from_estimates(
    estimator: &str,
    estimand: Estimand,
    truth: f64,
    estimates: &[Estimate],
    failures: usize,
) -> Result<ReplicateMetrics> {
    if estimates.len() < 2 {
        return Err(Error::Insufficient(format!(
            "{estimator}: {} successful replicates, need at least 2",
            estimates.len()
        )));
    }
    let points: Vec<f64> = estimates.iter().map(|e| e.point).collect();
    let bias = mean(&points) - truth;
    let covered = estimates.iter().filter(|e| e.lower <= truth && truth <= e.upper).count();
    let widths: Vec<f64> = estimates.iter().map(|e| e.upper - e.lower).collect();
    Ok(ReplicateMetrics {
        estimator: estimator.to_string(),
        estimand,
        truth,
        replicates: estimates.len(),
        failures,
        bias,
        abs_bias: bias.abs(),
        esd: sample_variance(&points).max(0.0).sqrt(),
        coverage: covered as f64 / estimates.len() as f64,
        width: mean(&widths),
    })
}

/// Scenario estimands: relative risk and risk difference for binary
/// outcomes, the mean difference otherwise.
pub fn scenario_estimands(scenario: u8) -> Vec<Estimand> {
    if scenario <= 2 {
        vec![Estimand::RelativeRisk, Estimand::Difference]
    } else {
        vec![Estimand::Difference]
    }
}

/// Runs every estimator on `replicates` generated datasets. Replicate `r`
/// draws its data from `(seed, REPLICATE, r)` and estimator `e` uses
/// `(replicate seed, BASELINE, e)`; replicates run in parallel.
pub fn evaluate_replicates(
    scenario: u8,
    n: usize,
    estimators: &[EstimatorKind],
    replicates: usize,
    seed: u64,
) -> Result<Vec<ReplicateMetrics>> {
    ScenarioSpec { scenario, n, seed, missing: false }.validate()?;
    if replicates < 2 {
        return Err(Error::Validation(format!("need at least 2 replicates, got {replicates}")));
    }
    if scenario > 2 && estimators.iter().any(EstimatorKind::uses_missing_data) {
        return Err(Error::Validation(format!("scenario {scenario} has no missingness mechanism")));
    }
    let estimands = scenario_estimands(scenario);
    let truth = Truth::benchmark(scenario);
    let per_rep: Vec<Vec<Option<Vec<Estimate>>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(seed, &[purpose::REPLICATE, r as u64]);
            let complete = generate_complete(scenario, n, &mut stream(rep_seed, &[purpose::GENERATE]))?;
            let masked = if estimators.iter().any(EstimatorKind::uses_missing_data) {
                apply_missingness(scenario, &complete, &mut stream(rep_seed, &[purpose::MISSINGNESS]))?
            } else {
                complete.clone()
            };
            Ok(estimators
                .iter()
                .enumerate()
                .map(|(e, est)| {
                    let est_seed = derive_seed(rep_seed, &[purpose::BASELINE, e as u64]);
                    est.run(&complete, &masked, &estimands, est_seed).ok().map(|o| o.estimates)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (e, est) in estimators.iter().enumerate() {
        let ok: Vec<&Vec<Estimate>> = per_rep.iter().filter_map(|row| row[e].as_ref()).collect();
        let failures = replicates - ok.len();
        for (k, &estimand) in estimands.iter().enumerate() {
            let t = match estimand {
                Estimand::RelativeRisk => truth.psi_rr,
                Estimand::Difference => truth.psi_diff,
            }
            .expect("scenario truth covers its estimands");
            let values: Vec<Estimate> = ok.iter().map(|v| v[k]).collect();
            out.push(metrics_from_estimates(est.name(), estimand, t, &values, failures)?);
        }
    }
    Ok(out)
}

/// One line of the benchmark table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub scenario: u8,
    pub n: usize,
    pub estimator: String,
    pub estimand: Estimand,
    pub truth: f64,
    pub replicates: usize,
    pub failures: usize,
    pub bias: f64,
    pub abs_bias: f64,
    pub esd: f64,
    pub coverage: f64,
    pub width: f64,
}

impl BenchmarkRow {
    pub fn new(scenario: u8, n: usize, m: &ReplicateMetrics) -> Self {
        Self {
            scenario,
            n,
            estimator: m.estimator.clone(),
            estimand: m.estimand,
            truth: m.truth,
            replicates: m.replicates,
            failures: m.failures,
            bias: m.bias,
            abs_bias: m.abs_bias,
            esd: m.esd,
            coverage: m.coverage,
            width: m.width,
        }
    }
}

pub fn write_benchmark(rows: &[BenchmarkRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_benchmark(path: impl AsRef<Path>) -> Result<Vec<BenchmarkRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
