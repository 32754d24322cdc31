use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    linear_predictor, sample_beta, sample_dirichlet, sample_prior_covariate,
    sample_prior_outcome, sample_scaled_inv_chi2, CovariateParams, Observations, OutcomeParams,
    PriorSpec,
};
use crate::math::logistic;

/// Random-walk Metropolis steps per logistic-coefficient update.
pub const MH_INNER_STEPS: usize = 5;

const TARGET_ACCEPTANCE: f64 = 0.30;

/// Proposal scale and acceptance bookkeeping for the logistic-coefficient
/// random-walk Metropolis update.
///
/// The proposal is `beta' = beta + scale * F^{-1/2} z`, where `F` is the
/// cluster's Fisher information at the prior mean plus the prior precision.
/// `F` depends on the cluster's covariates only, so each step is a symmetric
/// kernel given the partition. `scale` is adapted during burn-in only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MhTuner {
    pub log_scale: f64,
    pub adapting: bool,
    pub accepted: u64,
    pub proposed: u64,
    window_accepted: u64,
    window_proposed: u64,
    adaptations: u64,
}

impl MhTuner {
    pub fn new(dim: usize) -> Self {
        Self {
            log_scale: (2.38 / (dim.max(1) as f64).sqrt()).ln(),
            adapting: true,
            accepted: 0,
            proposed: 0,
            window_accepted: 0,
            window_proposed: 0,
            adaptations: 0,
        }
    }

    pub fn frozen(dim: usize) -> Self {
        Self {
            adapting: false,
            ..Self::new(dim)
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.window_proposed += 1;
        if accepted {
            self.accepted += 1;
            self.window_accepted += 1;
        }
    }

    /// Robbins–Monro step on the log scale toward 30% acceptance, using the
    /// proposals since the previous call. No-op once adaptation is off.
    pub fn adapt(&mut self) {
        if !self.adapting || self.window_proposed == 0 {
            return;
        }
        self.adaptations += 1;
        let rate = self.window_accepted as f64 / self.window_proposed as f64;
        let gain = 1.0 / (self.adaptations as f64).sqrt().max(1.0);
        self.log_scale += gain * (rate - TARGET_ACCEPTANCE);
        self.log_scale = self.log_scale.clamp(-12.0, 3.0);
        self.window_accepted = 0;
        self.window_proposed = 0;
    }

    pub fn stop_adapting(&mut self) {
        self.adapting = false;
        self.accepted = 0;
        self.proposed = 0;
        self.window_accepted = 0;
        self.window_proposed = 0;
    }
}

/// Refreshes a y-cluster's outcome parameters given its members.
///
/// Binary outcome: [`MH_INNER_STEPS`] random-walk Metropolis steps targeting
/// `N(beta0, tau2_beta I) * prod K(y | x, beta)`. Continuous outcome: one
/// exact Gibbs pass `beta | sigma2` then `sigma2 | beta`. An empty member set
/// yields a prior draw.
pub fn update_outcome_params<R: Rng + ?Sized>(
    obs: &Observations<'_>,
    members: &[usize],
    current: &OutcomeParams,
    prior: &PriorSpec,
    tuner: &mut MhTuner,
    rng: &mut R,
) -> OutcomeParams {
    if members.is_empty() {
        return sample_prior_outcome(prior, rng);
    }
    match current.sigma2 {
        None => logistic_mh(obs, members, current, prior, tuner, rng),
        Some(s2) => linear_gibbs(obs, members, &current.beta, s2, prior, rng),
    }
}

fn logistic_loglik(obs: &Observations<'_>, members: &[usize], beta: &[f64]) -> f64 {
    members
        .iter()
        .map(|&i| {
            let theta_eta = linear_predictor(beta, obs.a[i], obs.row(i));
            if obs.y[i] == 1.0 {
                crate::math::log_logistic(theta_eta)
            } else {
                crate::math::log_logistic(-theta_eta)
            }
        })
        .sum()
}

fn log_prior_beta(beta: &[f64], prior: &PriorSpec) -> f64 {
    -0.5 * beta
        .iter()
        .zip(&prior.beta0)
        .map(|(b, m)| (b - m) * (b - m))
        .sum::<f64>()
        / prior.tau2_beta
}

/// Fills a design row `(1, indicators, l)` into `out`.
fn fill_design(a: usize, l: &[f64], q: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    out[0] = 1.0;
    if a > 0 {
        out[a] = 1.0;
    }
    out[q..].copy_from_slice(l);
}

fn logistic_mh<R: Rng + ?Sized>(
    obs: &Observations<'_>,
    members: &[usize],
    current: &OutcomeParams,
    prior: &PriorSpec,
    tuner: &mut MhTuner,
    rng: &mut R,
) -> OutcomeParams {
    let d = current.beta.len();
    let q = prior.dims.q;
    let mut info = DMatrix::<f64>::zeros(d, d);
    let mut x = vec![0.0; d];
    for &i in members {
        fill_design(obs.a[i], obs.row(i), q, &mut x);
        let p = logistic(linear_predictor(&prior.beta0, obs.a[i], obs.row(i)));
        let w = p * (1.0 - p);
        for r in 0..d {
            let wr = w * x[r];
            if wr == 0.0 {
                continue;
            }
            for c in 0..=r {
                info[(r, c)] += wr * x[c];
            }
        }
    }
    for r in 0..d {
        for c in 0..r {
            info[(c, r)] = info[(r, c)];
        }
        info[(r, r)] += 1.0 / prior.tau2_beta;
    }
    let chol = info
        .cholesky()
        .expect("Fisher information plus prior precision is positive definite");
    let upper = chol.l().transpose();

    let mut beta = current.beta.clone();
    let mut log_target = logistic_loglik(obs, members, &beta) + log_prior_beta(&beta, prior);
    let scale = tuner.scale();
    for _ in 0..MH_INNER_STEPS {
        let z = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
        let step = upper
            .solve_upper_triangular(&z)
            .expect("triangular factor has a positive diagonal");
        let proposal: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
        let cand = logistic_loglik(obs, members, &proposal) + log_prior_beta(&proposal, prior);
        let accept = rng.random::<f64>().ln() < cand - log_target;
        if accept {
            beta = proposal;
            log_target = cand;
        }
        tuner.record(accept);
    }
    OutcomeParams { beta, sigma2: None }
}

fn linear_gibbs<R: Rng + ?Sized>(
    obs: &Observations<'_>,
    members: &[usize],
    beta_current: &[f64],
    sigma2: f64,
    prior: &PriorSpec,
    rng: &mut R,
) -> OutcomeParams {
    let d = beta_current.len();
    let q = prior.dims.q;
    let mut xtx = DMatrix::<f64>::zeros(d, d);
    let mut xty = DVector::<f64>::zeros(d);
    let mut x = vec![0.0; d];
    for &i in members {
        fill_design(obs.a[i], obs.row(i), q, &mut x);
        let y = obs.y[i];
        for r in 0..d {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            xty[r] += xr * y;
            for c in 0..=r {
                xtx[(r, c)] += xr * x[c];
            }
        }
    }
    for r in 0..d {
        for c in 0..r {
            xtx[(c, r)] = xtx[(r, c)];
        }
    }
    let beta = sample_beta_given_sigma2(&xtx, &xty, sigma2, prior, rng);

    let ssr: f64 = members
        .iter()
        .map(|&i| {
            let r = obs.y[i] - linear_predictor(&beta, obs.a[i], obs.row(i));
            r * r
        })
        .sum();
    let n = members.len() as f64;
    let nu = prior.nu_sigma + n;
    let s2 = (prior.nu_sigma * prior.sigma2_0 + ssr) / nu;
    let sigma2 = sample_scaled_inv_chi2(nu, s2, rng);
    OutcomeParams {
        beta,
        sigma2: Some(sigma2),
    }
}

/// `beta | sigma2 ~ N(V (X'y / s2 + beta0 / tau2), V)`, `V^{-1} = X'X / s2 + I / tau2`.
fn sample_beta_given_sigma2<R: Rng + ?Sized>(
    xtx: &DMatrix<f64>,
    xty: &DVector<f64>,
    sigma2: f64,
    prior: &PriorSpec,
    rng: &mut R,
) -> Vec<f64> {
    let d = xty.len();
    let mut precision = xtx / sigma2;
    for r in 0..d {
        precision[(r, r)] += 1.0 / prior.tau2_beta;
    }
    let rhs = xty / sigma2 + DVector::from_column_slice(&prior.beta0) / prior.tau2_beta;
    let chol = precision
        .cholesky()
        .expect("posterior precision is positive definite");
    let mean = chol.solve(&rhs);
    let z = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .expect("triangular factor has a positive diagonal");
    (mean + noise).iter().copied().collect()
}

/// Conjugate refresh of an x-subcluster's covariate parameters.
pub fn update_covariate_params<R: Rng + ?Sized>(
    obs: &Observations<'_>,
    members: &[usize],
    prior: &PriorSpec,
    rng: &mut R,
) -> CovariateParams {
    if members.is_empty() {
        return sample_prior_covariate(prior, rng);
    }
    let dims = prior.dims;
    let n = members.len() as f64;

    let mut conc = prior.treatment_concentration();
    for &i in members {
        conc[obs.a[i]] += 1.0;
    }
    let treatment = sample_dirichlet(&conc, rng);

    let pi = (0..dims.p_binary)
        .map(|r| {
            let ones: f64 = members.iter().map(|&i| obs.row(i)[r]).sum();
            sample_beta(prior.a_x + ones, prior.b_x + n - ones, rng)
        })
        .collect();

    let mut mu = Vec::with_capacity(dims.p_continuous);
    let mut tau2 = Vec::with_capacity(dims.p_continuous);
    for c in 0..dims.p_continuous {
        let r = dims.p_binary + c;
        let xbar = members.iter().map(|&i| obs.row(i)[r]).sum::<f64>() / n;
        let ss: f64 = members
            .iter()
            .map(|&i| {
                let dlt = obs.row(i)[r] - xbar;
                dlt * dlt
            })
            .sum();
        let nu = prior.nu0 + n;
        let shrink = prior.c0 * n / (prior.c0 + n) * (xbar - prior.mu0).powi(2);
        let s2 = (prior.nu0 * prior.tau2_0 + ss + shrink) / nu;
        let t2 = sample_scaled_inv_chi2(nu, s2, rng);
        let post_mean = (prior.c0 * prior.mu0 + n * xbar) / (prior.c0 + n);
        let z: f64 = rng.sample(StandardNormal);
        mu.push(post_mean + (t2 / (prior.c0 + n)).sqrt() * z);
        tau2.push(t2);
    }
    CovariateParams::new(treatment, pi, mu, tau2)
}
