//! Desk-scale replication studies. Each scores estimators over replicate
//! datasets against the benchmark truth of its scenario.

use std::time::Instant;

use edpcausal::sim::{evaluate_replicates, Estimand, EstimatorKind, ReplicateMetrics};
use edpcausal::SamplerConfig;

use crate::support::{note, report, Verdict};

const SEED: u64 = 20_240_602;

// Scenario 1.
const S1_BIAS_MAX: f64 = 0.10;
const S1_COVERAGE: (f64, f64) = (0.87, 0.99);
const S1_WIDTH_REF: f64 = 1.20;
const S1_WIDTH_REL: f64 = 0.30;
const S1_MISSING_BIAS_MAX: f64 = 0.12;
const S1_MISSING_WIDTH_REL: f64 = 0.15;
// Scenario 2.
const S2_BIAS_MAX: f64 = 0.10;
const S2_COVERAGE_MIN: f64 = 0.85;
const S2_PB_RD_BIAS: (f64, f64) = (0.08, 0.16);
const S2_PB_COVERAGE_MAX: f64 = 0.40;
// Scenario 3.
const S3_BIAS_MAX: f64 = 0.20;
const S3_ESD_MAX: f64 = 0.30;
// Scenario 4, reduced.
const S4_BIAS_MAX: f64 = 0.30;

fn edp(iterations: usize, burn_in: usize, thin: usize, missing: bool) -> EstimatorKind {
    EstimatorKind::Edp {
        sampler: SamplerConfig { iterations, burn_in, thin, chains: 1, ..SamplerConfig::default() },
        stride: 1,
        population: 1_000,
        missing,
    }
}

fn run(scenario: u8, n: usize, replicates: usize, estimators: &[EstimatorKind]) -> Result<Vec<ReplicateMetrics>, String> {
    let started = Instant::now();
    note(format!("scenario {scenario}: n = {n}, {replicates} replicates, {} estimators", estimators.len()));
    let metrics = evaluate_replicates(scenario, n, estimators, replicates, SEED).map_err(|e| e.to_string())?;
    note(format!(
        "{:<18} {:<14} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6}",
        "estimator", "estimand", "truth", "bias", "esd", "coverage", "width", "failed"
    ));
    for m in &metrics {
        note(format!(
            "{:<18} {:<14} {:>8.4} {:>8.4} {:>8.4} {:>8.3} {:>8.4} {:>6}",
            m.estimator,
            format!("{:?}", m.estimand),
            m.truth,
            m.bias,
            m.esd,
            m.coverage,
            m.width,
            m.failures
        ));
    }
    note(format!("scenario {scenario} finished in {:.0} s", started.elapsed().as_secs_f64()));
    Ok(metrics)
}

fn find<'a>(m: &'a [ReplicateMetrics], estimator: &str, estimand: Estimand) -> &'a ReplicateMetrics {
    m.iter().find(|r| r.estimator == estimator && r.estimand == estimand).expect("metrics row present")
}

fn errored(ids: &[&str], e: &str) -> Vec<Verdict> {
    ids.iter().map(|id| report(*id, false, format!("run failed: {e}"))).collect()
}

/// Scenario 1, complete and missing-data variants on shared replicates.
pub fn scenario1() -> Vec<Verdict> {
    let est = [edp(10_000, 2_000, 20, false), edp(10_000, 2_000, 20, true)];
    let m = match run(1, 250, 100, &est) {
        Ok(m) => m,
        Err(e) => return errored(&["AC1", "AC2"], &e),
    };
    let c = find(&m, "edp", Estimand::RelativeRisk);
    let w_lo = S1_WIDTH_REF * (1.0 - S1_WIDTH_REL);
    let w_hi = S1_WIDTH_REF * (1.0 + S1_WIDTH_REL);
    let ac1 = report(
        "AC1",
        c.abs_bias <= S1_BIAS_MAX
            && (S1_COVERAGE.0..=S1_COVERAGE.1).contains(&c.coverage)
            && (w_lo..=w_hi).contains(&c.width),
        format!(
            "relative risk over {} replicates ({} failed): |bias| {:.4} (<= {S1_BIAS_MAX}), coverage {:.3} (in [{}, {}]), width {:.4} (in [{w_lo:.2}, {w_hi:.2}])",
            c.replicates, c.failures, c.abs_bias, c.coverage, S1_COVERAGE.0, S1_COVERAGE.1, c.width
        ),
    );
    let mm = find(&m, "edp_missing", Estimand::RelativeRisk);
    let rel = mm.width / c.width - 1.0;
    let ac2 = report(
        "AC2",
        mm.abs_bias <= S1_MISSING_BIAS_MAX && rel.abs() <= S1_MISSING_WIDTH_REL,
        format!(
            "relative risk with missing covariates over {} replicates ({} failed): |bias| {:.4} (<= {S1_MISSING_BIAS_MAX}), width {:.4} vs complete-data {:.4}: {:+.1}% (within {:.0}%)",
            mm.replicates,
            mm.failures,
            mm.abs_bias,
            mm.width,
            c.width,
            100.0 * rel,
            100.0 * S1_MISSING_WIDTH_REL
        ),
    );
    vec![ac1, ac2]
}

/// Scenario 2: the EDP recovers the effect, the additive logistic model
/// does not.
pub fn scenario2() -> Vec<Verdict> {
    let est = [edp(5_000, 1_000, 10, false), EstimatorKind::ParametricBayes { burn_in: 1_000, draws: 4_000 }];
    let m = match run(2, 1_000, 100, &est) {
        Ok(m) => m,
        Err(e) => return errored(&["AC3"], &e),
    };
    let e = find(&m, "edp", Estimand::RelativeRisk);
    let pb = find(&m, "parametric_bayes", Estimand::Difference);
    let pass = e.abs_bias <= S2_BIAS_MAX
        && e.coverage >= S2_COVERAGE_MIN
        && (S2_PB_RD_BIAS.0..=S2_PB_RD_BIAS.1).contains(&pb.abs_bias)
        && pb.coverage <= S2_PB_COVERAGE_MAX;
    vec![report(
        "AC3",
        pass,
        format!(
            "EDP relative risk ({} failed): |bias| {:.4} (<= {S2_BIAS_MAX}), coverage {:.3} (>= {S2_COVERAGE_MIN}); parametric Bayes risk difference ({} failed): |bias| {:.4} (in [{}, {}]), coverage {:.3} (<= {S2_PB_COVERAGE_MAX})",
            e.failures, e.abs_bias, e.coverage, pb.failures, pb.abs_bias, S2_PB_RD_BIAS.0, S2_PB_RD_BIAS.1, pb.coverage
        ),
    )]
}

pub fn scenario3() -> Vec<Verdict> {
    let m = match run(3, 1_000, 50, &[edp(5_000, 1_000, 10, false)]) {
        Ok(m) => m,
        Err(e) => return errored(&["AC4"], &e),
    };
    let e = find(&m, "edp", Estimand::Difference);
    vec![report(
        "AC4",
        e.abs_bias <= S3_BIAS_MAX && e.esd <= S3_ESD_MAX,
        format!(
            "mean difference over {} replicates ({} failed): |bias| {:.4} (<= {S3_BIAS_MAX}), ESD {:.4} (<= {S3_ESD_MAX})",
            e.replicates, e.failures, e.abs_bias, e.esd
        ),
    )]
}

/// Reduced scenario 4 (p = 84): a smoke check that must complete.
pub fn scenario4() -> Vec<Verdict> {
    let m = match run(4, 1_000, 20, &[edp(2_500, 500, 5, false)]) {
        Ok(m) => m,
        Err(e) => return errored(&["AC5"], &e),
    };
    let e = find(&m, "edp", Estimand::Difference);
    vec![report(
        "AC5",
        e.failures == 0 && e.abs_bias <= S4_BIAS_MAX,
        format!(
            "mean difference, p = 84, over {} replicates ({} failed): |bias| {:.4} (<= {S4_BIAS_MAX}), ESD {:.4}",
            e.replicates, e.failures, e.abs_bias, e.esd
        ),
    )]
}
