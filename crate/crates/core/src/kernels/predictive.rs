//! Prior-predictive quantities for a freshly opened cluster: the covariate
//! density `K0(a, l)`, the outcome mean `E0(y | a, l)` and the outcome CDF.
//!
//! Treatment and binary covariate components integrate in closed form and
//! are always exact. Continuous covariates, the logistic mean and the
//! outcome-variance mixture are either Monte Carlo averages over prior draws
//! or deterministic quadrature.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, InverseGamma};

use super::{sample_scaled_inv_chi2, PriorSpec};
use crate::data::VariableKind;
use crate::math::{logistic, normal_cdf, normal_logpdf, student_t_logpdf};

const HERMITE_NODES: usize = 40;
const VARIANCE_NODES: usize = 64;

/// How non-closed-form prior integrals are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictiveMethod {
    /// Average over this many prior draws, redrawn once per sweep.
    MonteCarlo { draws: usize },
    /// Student-t marginals and Gauss-Hermite quadrature.
    Exact,
}

impl Default for PredictiveMethod {
    fn default() -> Self {
        PredictiveMethod::MonteCarlo { draws: 50 }
    }
}

#[derive(Clone, Debug)]
enum ContinuousMarginal {
    /// Per covariate, `(mu, tau2)` prior draws.
    Draws(Vec<Vec<(f64, f64)>>),
    StudentT { df: f64, loc: f64, scale2: f64 },
}

/// Frozen prior integrals for one sweep. Deterministic once built.
#[derive(Clone, Debug)]
pub struct PriorPredictive {
    beta0: Vec<f64>,
    tau2_beta: f64,
    outcome: VariableKind,
    p_binary: usize,
    ln_treatment: Vec<f64>,
    ln_one: f64,
    ln_zero: f64,
    continuous: ContinuousMarginal,
    /// Standard-normal nodes and weights for the logistic mean.
    eta_nodes: Vec<(f64, f64)>,
    /// Residual-variance nodes and weights; empty for a binary outcome.
    sigma2_nodes: Vec<(f64, f64)>,
}

impl PriorPredictive {
    pub fn new<R: Rng + ?Sized>(prior: &PriorSpec, method: PredictiveMethod, rng: &mut R) -> Self {
        let dims = prior.dims;
        let conc = prior.treatment_concentration();
        let total: f64 = conc.iter().sum();
        let ln_treatment = conc.iter().map(|c| (c / total).ln()).collect();
        let ln_one = (prior.a_x / (prior.a_x + prior.b_x)).ln();
        let ln_zero = (prior.b_x / (prior.a_x + prior.b_x)).ln();
        let binary_outcome = dims.outcome == VariableKind::Binary;
        let (continuous, eta_nodes, sigma2_nodes) = match method {
            PredictiveMethod::MonteCarlo { draws } => {
                let m = draws.max(1);
                let w = 1.0 / m as f64;
                let cont = (0..dims.p_continuous)
                    .map(|_| {
                        (0..m)
                            .map(|_| {
                                let t2 = sample_scaled_inv_chi2(prior.nu0, prior.tau2_0, rng);
                                let z: f64 = rng.sample(StandardNormal);
                                (prior.mu0 + (t2 / prior.c0).sqrt() * z, t2)
                            })
                            .collect()
                    })
                    .collect();
                let eta = if binary_outcome {
                    (0..m).map(|_| (rng.sample::<f64, _>(StandardNormal), w)).collect()
                } else {
                    Vec::new()
                };
                let s2 = if binary_outcome {
                    Vec::new()
                } else {
                    (0..m)
                        .map(|_| (sample_scaled_inv_chi2(prior.nu_sigma, prior.sigma2_0, rng), w))
                        .collect()
                };
                (ContinuousMarginal::Draws(cont), eta, s2)
            }
            PredictiveMethod::Exact => {
                let cont = ContinuousMarginal::StudentT {
                    df: prior.nu0,
                    loc: prior.mu0,
                    scale2: prior.tau2_0 * (1.0 + 1.0 / prior.c0),
                };
                let eta = if binary_outcome { gauss_hermite(HERMITE_NODES) } else { Vec::new() };
                let s2 = if binary_outcome {
                    Vec::new()
                } else {
                    variance_quantile_nodes(prior.nu_sigma, prior.sigma2_0, VARIANCE_NODES)
                };
                (cont, eta, s2)
            }
        };
        Self {
            beta0: prior.beta0.clone(),
            tau2_beta: prior.tau2_beta,
            outcome: dims.outcome,
            p_binary: dims.p_binary,
            ln_treatment,
            ln_one,
            ln_zero,
            continuous,
            eta_nodes,
            sigma2_nodes,
        }
    }

    /// `log K0(a, l)`.
    pub fn ln_k0(&self, a: usize, l: &[f64]) -> f64 {
        self.ln_k0_treatment(a)
            + l.iter()
                .enumerate()
                .map(|(r, &x)| self.ln_k0_component(r, x))
                .sum::<f64>()
    }

    /// Prior marginal log-probability of treatment level `a`.
    pub fn ln_k0_treatment(&self, a: usize) -> f64 {
        self.ln_treatment[a]
    }

    /// Prior marginal log-density of covariate `r` at `x`.
    pub fn ln_k0_component(&self, r: usize, x: f64) -> f64 {
        if r < self.p_binary {
            return if x == 1.0 { self.ln_one } else { self.ln_zero };
        }
        let c = r - self.p_binary;
        match &self.continuous {
            ContinuousMarginal::StudentT { df, loc, scale2 } => student_t_logpdf(x, *df, *loc, *scale2),
            ContinuousMarginal::Draws(draws) => {
                let d = &draws[c];
                let max = d
                    .iter()
                    .map(|&(mu, t2)| normal_logpdf(x, mu, t2))
                    .fold(f64::NEG_INFINITY, f64::max);
                if !max.is_finite() {
                    return max;
                }
                let sum: f64 = d.iter().map(|&(mu, t2)| (normal_logpdf(x, mu, t2) - max).exp()).sum();
                max + (sum / d.len() as f64).ln()
            }
        }
    }

    /// Prior mean of `x' beta` and its prior standard deviation.
    fn eta_moments(&self, a: usize, l: &[f64]) -> (f64, f64) {
        let eta0 = super::linear_predictor(&self.beta0, a, l);
        let norm2 = 1.0 + f64::from(u8::from(a > 0)) + l.iter().map(|x| x * x).sum::<f64>();
        (eta0, (self.tau2_beta * norm2).sqrt())
    }

    /// `E0(y | a, l)`.
    pub fn e0(&self, a: usize, l: &[f64]) -> f64 {
        let (eta0, sd) = self.eta_moments(a, l);
        match self.outcome {
            VariableKind::Continuous => eta0,
            VariableKind::Binary => self.eta_nodes.iter().map(|&(z, w)| w * logistic(eta0 + sd * z)).sum(),
        }
    }

    /// Prior-predictive `P(Y <= y | a, l)`.
    pub fn cdf0(&self, y: f64, a: usize, l: &[f64]) -> f64 {
        match self.outcome {
            VariableKind::Binary => {
                if y < 0.0 {
                    0.0
                } else if y < 1.0 {
                    1.0 - self.e0(a, l)
                } else {
                    1.0
                }
            }
            VariableKind::Continuous => {
                // Given sigma2 the outcome is Normal(eta0, sd^2 + sigma2).
                let (eta0, sd) = self.eta_moments(a, l);
                self.sigma2_nodes
                    .iter()
                    .map(|&(s2, w)| w * normal_cdf((y - eta0) / (sd * sd + s2).sqrt()))
                    .sum()
            }
        }
    }
}

/// Monte Carlo `log K0(a, l)` from `m0` fresh prior draws.
pub fn log_prior_predictive_k0<R: Rng + ?Sized>(
    a: usize,
    l: &[f64],
    prior: &PriorSpec,
    m0: usize,
    rng: &mut R,
) -> f64 {
    PriorPredictive::new(prior, PredictiveMethod::MonteCarlo { draws: m0 }, rng).ln_k0(a, l)
}

/// Monte Carlo `E0(y | a, l)` from `m0` fresh prior draws.
pub fn prior_predictive_e0<R: Rng + ?Sized>(
    a: usize,
    l: &[f64],
    prior: &PriorSpec,
    m0: usize,
    rng: &mut R,
) -> f64 {
    PriorPredictive::new(prior, PredictiveMethod::MonteCarlo { draws: m0 }, rng).e0(a, l)
}

/// Nodes and weights integrating against the standard normal density
/// (Golub-Welsch on the probabilists' Hermite recurrence).
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let jacobi = DMatrix::from_fn(n, n, |r, c| {
        if r + 1 == c || c + 1 == r {
            (r.max(c) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    for node in &mut nodes {
        node.1 /= total;
    }
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    nodes
}

/// Equal-weight midpoint quantiles of the scaled inverse chi-square.
fn variance_quantile_nodes(nu: f64, s2: f64, n: usize) -> Vec<(f64, f64)> {
    let dist = InverseGamma::new(nu / 2.0, nu * s2 / 2.0).expect("positive inverse-gamma parameters");
    let w = 1.0 / n as f64;
    (0..n).map(|k| (dist.inverse_cdf((k as f64 + 0.5) * w), w)).collect()
}
