//! Data augmentation for missing covariates.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kernels::{outcome_loglik, CovariateParams, OutcomeParams};

/// Probability that a missing binary covariate `r` equals one, given the
/// subject's outcome, treatment, remaining covariates and cluster parameters.
///
/// `row` is the subject's completed covariate row; entry `r` is ignored.
pub fn binary_full_conditional(
    y: f64,
    a: usize,
    row: &mut [f64],
    r: usize,
    theta: &OutcomeParams,
    omega: &CovariateParams,
) -> f64 {
    let keep = row[r];
    row[r] = 1.0;
    let l1 = omega.ln_component(r, 1.0) + outcome_loglik(y, a, row, theta);
    row[r] = 0.0;
    let l0 = omega.ln_component(r, 0.0) + outcome_loglik(y, a, row, theta);
    row[r] = keep;
    if l1 == f64::NEG_INFINITY {
        return 0.0;
    }
    if l0 == f64::NEG_INFINITY {
        return 1.0;
    }
    1.0 / (1.0 + (l0 - l1).exp())
}

/// Draws missing binary covariate `r` of one subject from its full
/// conditional and stores it in `row`.
pub fn impute_missing_binary<R: Rng + ?Sized>(
    y: f64,
    a: usize,
    row: &mut [f64],
    r: usize,
    theta: &OutcomeParams,
    omega: &CovariateParams,
    rng: &mut R,
) -> f64 {
    let p = binary_full_conditional(y, a, row, r, theta, omega);
    row[r] = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
    row[r]
}

/// One random-walk Metropolis step for missing continuous covariate `r`,
/// targeting `K(l_r | omega) K(y | x, theta)`. The proposal sd is
/// `scale * tau` of the subject's subcluster. Returns whether the move was
/// accepted.
#[allow(clippy::too_many_arguments)]
pub fn impute_missing_continuous<R: Rng + ?Sized>(
    y: f64,
    a: usize,
    row: &mut [f64],
    r: usize,
    theta: &OutcomeParams,
    omega: &CovariateParams,
    scale: f64,
    rng: &mut R,
) -> bool {
    let c = r - omega.pi().len();
    let current = row[r];
    let log_target = |row: &[f64]| omega.ln_component(r, row[r]) + outcome_loglik(y, a, row, theta);
    let before = log_target(row);
    let z: f64 = rng.sample(StandardNormal);
    row[r] = current + scale * omega.tau2()[c].sqrt() * z;
    let after = log_target(row);
    let log_ratio = after - before;
    if log_ratio.is_finite() && rng.random::<f64>().ln() < log_ratio {
        true
    } else {
        row[r] = current;
        false
    }
}
