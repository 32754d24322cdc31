//! Concentration-parameter updates.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::kernels::{sample_beta, PriorSpec};

/// The two concentration parameters, both strictly positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperState {
    pub alpha_theta: f64,
    pub alpha_omega: f64,
}

impl HyperState {
    pub fn from_prior<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> Self {
        let g = Gamma::new(prior.alpha_shape, 1.0 / prior.alpha_rate).expect("positive gamma prior");
        Self {
            alpha_theta: g.sample(rng).max(f64::MIN_POSITIVE),
            alpha_omega: g.sample(rng).max(f64::MIN_POSITIVE),
        }
    }
}

/// Auxiliary-variable Gibbs draw of the y-level concentration given `k`
/// occupied clusters among `n` subjects.
///
/// With `eta ~ Beta(alpha + 1, n)` and `r = b0 - ln eta`, the draw is
/// `Gamma(a0 + k, r)` with probability `w` and `Gamma(a0 + k - 1, r)`
/// otherwise, where `w / (1 - w) = (a0 + k - 1) / (n r)`.
pub fn update_alpha_theta<R: Rng + ?Sized>(alpha: f64, k: usize, n: usize, prior: &PriorSpec, rng: &mut R) -> f64 {
    debug_assert!(k >= 1 && n >= 1);
    let eta = sample_beta(alpha + 1.0, n as f64, rng).max(f64::MIN_POSITIVE);
    let rate = prior.alpha_rate - eta.ln();
    let odds = mixture_odds(k, n, prior.alpha_shape, rate);
    let shape = if rng.random::<f64>() < odds / (1.0 + odds) {
        prior.alpha_shape + k as f64
    } else {
        prior.alpha_shape + k as f64 - 1.0
    };
    Gamma::new(shape, 1.0 / rate)
        .expect("positive gamma parameters")
        .sample(rng)
        .max(f64::MIN_POSITIVE)
}

/// Odds of the `a0 + k` component.
pub fn mixture_odds(k: usize, n: usize, a0: f64, rate: f64) -> f64 {
    (a0 + k as f64 - 1.0) / (n as f64 * rate)
}

/// Log of `p(alpha) alpha^{sum(k_j - 1)} prod_j (alpha + n_j) B(alpha + 1, n_j)`
/// up to a constant. `sizes` lists `(n_j, k_j)` per y-cluster.
pub fn log_alpha_omega_target(alpha: f64, sizes: &[(usize, usize)], prior: &PriorSpec) -> f64 {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return f64::NEG_INFINITY;
    }
    let ln_a = alpha.ln();
    let mut acc = (prior.alpha_shape - 1.0) * ln_a - prior.alpha_rate * alpha;
    let lg_a1 = ln_gamma(alpha + 1.0);
    for &(nj, kj) in sizes {
        let nj = nj as f64;
        acc += (kj as f64 - 1.0) * ln_a + (alpha + nj).ln() + lg_a1 + ln_gamma(nj) - ln_gamma(alpha + 1.0 + nj);
    }
    acc
}

/// One random-walk Metropolis step on `ln alpha_omega` with proposal sd
/// `step`. Returns the new value and whether the proposal was accepted.
pub fn update_alpha_omega<R: Rng + ?Sized>(
    alpha: f64,
    sizes: &[(usize, usize)],
    prior: &PriorSpec,
    step: f64,
    rng: &mut R,
) -> (f64, bool) {
    debug_assert!(step > 0.0);
    let z: f64 = rng.sample(StandardNormal);
    let proposal = alpha * (step * z).exp();
    // The log-scale walk contributes the Jacobian ln(alpha') - ln(alpha).
    let log_ratio = log_alpha_omega_target(proposal, sizes, prior) - log_alpha_omega_target(alpha, sizes, prior)
        + proposal.ln()
        - alpha.ln();
    if log_ratio.is_finite() && rng.random::<f64>().ln() < log_ratio {
        (proposal, true)
    } else {
        (alpha, false)
    }
}
