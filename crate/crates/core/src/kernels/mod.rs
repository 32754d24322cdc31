//! Local likelihood kernels and their parameter updates.
//!
//! A y-cluster carries [`OutcomeParams`]: a local GLM for the outcome given
//! the design row `(1, treatment indicators, covariates)`. An x-subcluster
//! carries [`CovariateParams`]: independent categorical/Bernoulli/Normal
//! components for the treatment and each covariate.

mod glm;
mod predictive;
mod updates;

pub use glm::{
    design_matrix, design_row, fit_reference_glm, fit_reference_glm_or_ridge, fit_reference_glm_ridge, logistic_irls, GlmFit,
    RIDGE_FALLBACK,
};
pub use predictive::{
    log_prior_predictive_k0, prior_predictive_e0, PredictiveMethod, PriorPredictive,
};
pub use updates::{update_covariate_params, update_outcome_params, MhTuner, MH_INNER_STEPS};

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, VariableKind, VariableSchema};
use crate::error::{Error, Result};
use crate::math::{log_logistic, logistic, normal_logpdf};

/// Shape of the model: treatment levels, covariate counts, outcome family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub q: usize,
    pub p_binary: usize,
    pub p_continuous: usize,
    pub outcome: VariableKind,
}

impl ModelDims {
    pub fn from_schema(schema: &VariableSchema) -> Self {
        Self {
            q: schema.treatment_levels(),
            p_binary: schema.p_binary(),
            p_continuous: schema.p_continuous(),
            outcome: schema.outcome_kind(),
        }
    }

    pub fn p(&self) -> usize {
        self.p_binary + self.p_continuous
    }

    pub fn design_dim(&self) -> usize {
        self.q + self.p()
    }
}

/// Base-measure and concentration hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub dims: ModelDims,
    /// Prior mean of every cluster's regression coefficients.
    pub beta0: Vec<f64>,
    pub tau2_beta: f64,
    pub a_x: f64,
    pub b_x: f64,
    pub nu0: f64,
    pub tau2_0: f64,
    pub c0: f64,
    pub mu0: f64,
    pub nu_sigma: f64,
    pub sigma2_0: f64,
    /// Gamma shape for both concentration parameters.
    pub alpha_shape: f64,
    /// Gamma rate for both concentration parameters.
    pub alpha_rate: f64,
}

impl PriorSpec {
    /// Default hyperparameters with the given coefficient prior mean.
    pub fn with_beta0(dims: ModelDims, beta0: Vec<f64>) -> Result<Self> {
        let prior = Self {
            dims,
            beta0,
            tau2_beta: 4.0,
            a_x: 1.0,
            b_x: 1.0,
            nu0: 2.0,
            tau2_0: 1.0,
            c0: 0.5,
            mu0: 0.0,
            nu_sigma: 2.0,
            sigma2_0: 1.0,
            alpha_shape: 1.0,
            alpha_rate: 1.0,
        };
        prior.validate()?;
        Ok(prior)
    }

    /// Defaults with `beta0` centred on the maximum-likelihood GLM fit of the
    /// complete cases (empirical Bayes), falling back as in
    /// [`fit_reference_glm_or_ridge`] when the MLE does not exist.
    pub fn from_data(data: &Dataset) -> Result<Self> {
        let fit = fit_reference_glm_or_ridge(data)?;
        Self::with_beta0(ModelDims::from_schema(data.schema()), fit.beta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta0.len() != self.dims.design_dim() {
            return Err(Error::Validation(format!(
                "beta0 has length {}, design has {} columns",
                self.beta0.len(),
                self.dims.design_dim()
            )));
        }
        let positive = [
            ("tau2_beta", self.tau2_beta),
            ("a_x", self.a_x),
            ("b_x", self.b_x),
            ("nu0", self.nu0),
            ("tau2_0", self.tau2_0),
            ("c0", self.c0),
            ("nu_sigma", self.nu_sigma),
            ("sigma2_0", self.sigma2_0),
            ("alpha_shape", self.alpha_shape),
            ("alpha_rate", self.alpha_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("prior `{name}` must be positive, got {v}")));
            }
        }
        if !self.mu0.is_finite() || self.beta0.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("prior means"));
        }
        Ok(())
    }

    /// Dirichlet concentration for the treatment component. With two levels
    /// this is the Beta(`a_x`, `b_x`) prior on P(A = 1); with more levels a
    /// flat Dirichlet.
    pub fn treatment_concentration(&self) -> Vec<f64> {
        if self.dims.q == 2 {
            vec![self.b_x, self.a_x]
        } else {
            vec![1.0; self.dims.q]
        }
    }
}

/// Local GLM parameters of a y-cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeParams {
    pub beta: Vec<f64>,
    /// Residual variance; present only for continuous outcomes.
    pub sigma2: Option<f64>,
}

impl OutcomeParams {
    /// Linear predictor at treatment `a` and covariates `l`.
    #[inline]
    pub fn linear_predictor(&self, a: usize, l: &[f64]) -> f64 {
        linear_predictor(&self.beta, a, l)
    }

    /// Conditional mean of the outcome, `g^{-1}(linear predictor)`.
    #[inline]
    pub fn mean(&self, a: usize, l: &[f64]) -> f64 {
        let eta = self.linear_predictor(a, l);
        match self.sigma2 {
            Some(_) => eta,
            None => logistic(eta),
        }
    }
}

/// `beta[0] + beta[a] (a > 0) + sum_r beta[q + r] * l[r]`.
#[inline]
pub fn linear_predictor(beta: &[f64], a: usize, l: &[f64]) -> f64 {
    let q = beta.len() - l.len();
    let mut eta = beta[0];
    if a > 0 {
        eta += beta[a];
    }
    for (b, x) in beta[q..].iter().zip(l) {
        eta += b * x;
    }
    eta
}

/// Covariate-kernel parameters of an x-subcluster, with cached logarithms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "CovariateParamsRepr", into = "CovariateParamsRepr")]
pub struct CovariateParams {
    treatment_probs: Vec<f64>,
    pi: Vec<f64>,
    mu: Vec<f64>,
    tau2: Vec<f64>,
    ln_treatment: Vec<f64>,
    ln_pi: Vec<f64>,
    ln_1m_pi: Vec<f64>,
    ln_norm: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CovariateParamsRepr {
    treatment_probs: Vec<f64>,
    pi: Vec<f64>,
    mu: Vec<f64>,
    tau2: Vec<f64>,
}

impl From<CovariateParamsRepr> for CovariateParams {
    fn from(r: CovariateParamsRepr) -> Self {
        CovariateParams::new(r.treatment_probs, r.pi, r.mu, r.tau2)
    }
}

impl From<CovariateParams> for CovariateParamsRepr {
    fn from(c: CovariateParams) -> Self {
        CovariateParamsRepr {
            treatment_probs: c.treatment_probs,
            pi: c.pi,
            mu: c.mu,
            tau2: c.tau2,
        }
    }
}

impl CovariateParams {
    pub fn new(treatment_probs: Vec<f64>, pi: Vec<f64>, mu: Vec<f64>, tau2: Vec<f64>) -> Self {
        assert_eq!(mu.len(), tau2.len(), "mu/tau2 length mismatch");
        let ln_treatment = treatment_probs.iter().map(|p| p.ln()).collect();
        let ln_pi = pi.iter().map(|p| p.ln()).collect();
        let ln_1m_pi = pi.iter().map(|p| (-p).ln_1p()).collect();
        let ln_norm = tau2
            .iter()
            .map(|t| -0.5 * (crate::math::LN_2PI + t.ln()))
            .collect();
        Self {
            treatment_probs,
            pi,
            mu,
            tau2,
            ln_treatment,
            ln_pi,
            ln_1m_pi,
            ln_norm,
        }
    }

    pub fn treatment_probs(&self) -> &[f64] {
        &self.treatment_probs
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn tau2(&self) -> &[f64] {
        &self.tau2
    }

    /// Log-probability of treatment level `a`.
    #[inline]
    pub fn ln_treatment(&self, a: usize) -> f64 {
        self.ln_treatment[a]
    }

    /// Log-density of covariate `r` (binary-first ordering) at `x`.
    #[inline]
    pub fn ln_component(&self, r: usize, x: f64) -> f64 {
        let p1 = self.pi.len();
        if r < p1 {
            if x == 1.0 {
                self.ln_pi[r]
            } else {
                self.ln_1m_pi[r]
            }
        } else {
            let c = r - p1;
            let d = x - self.mu[c];
            self.ln_norm[c] - 0.5 * d * d / self.tau2[c]
        }
    }

    /// Log-density of the covariates alone (treatment excluded).
    #[inline]
    pub fn ln_covariates(&self, l: &[f64]) -> f64 {
        let p1 = self.pi.len();
        let mut acc = 0.0;
        for (r, &x) in l[..p1].iter().enumerate() {
            acc += if x == 1.0 { self.ln_pi[r] } else { self.ln_1m_pi[r] };
        }
        for (c, &x) in l[p1..].iter().enumerate() {
            let d = x - self.mu[c];
            acc += self.ln_norm[c] - 0.5 * d * d / self.tau2[c];
        }
        acc
    }

    /// Draws a covariate vector (treatment excluded) into `out`.
    pub fn sample_covariates<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        let p1 = self.pi.len();
        for r in 0..p1 {
            out[r] = if rng.random::<f64>() < self.pi[r] { 1.0 } else { 0.0 };
        }
        for c in 0..self.mu.len() {
            let z: f64 = rng.sample(StandardNormal);
            out[p1 + c] = self.mu[c] + self.tau2[c].sqrt() * z;
        }
    }
}

/// Borrowed view of completed observations (missing covariates already
/// imputed), as the kernels see them.
#[derive(Clone, Copy, Debug)]
pub struct Observations<'a> {
    pub y: &'a [f64],
    pub a: &'a [usize],
    /// Row-major `n x p`, no missing entries.
    pub l: &'a [f64],
    pub p: usize,
}

impl<'a> Observations<'a> {
    #[inline]
    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.l[i * self.p..(i + 1) * self.p]
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// `log K(y | a, l, theta)`: Bernoulli-logit when `theta.sigma2` is absent,
/// Normal otherwise.
#[inline]
pub fn outcome_loglik(y: f64, a: usize, l: &[f64], theta: &OutcomeParams) -> f64 {
    let eta = theta.linear_predictor(a, l);
    match theta.sigma2 {
        Some(s2) => normal_logpdf(y, eta, s2),
        None => {
            if y == 1.0 {
                log_logistic(eta)
            } else {
                log_logistic(-eta)
            }
        }
    }
}

/// Checked variant of [`outcome_loglik`] for external callers.
pub fn outcome_loglik_checked(y: f64, a: usize, l: &[f64], theta: &OutcomeParams) -> Result<f64> {
    if !y.is_finite() || l.iter().any(|v| !v.is_finite()) || theta.beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("outcome_loglik"));
    }
    if theta.beta.len() <= l.len() || a >= theta.beta.len() - l.len() {
        return Err(Error::Validation("design row and coefficient dimensions differ".into()));
    }
    Ok(outcome_loglik(y, a, l, theta))
}

/// `log K(a, l | omega)`: product of the treatment and covariate components.
#[inline]
pub fn covariate_loglik(a: usize, l: &[f64], omega: &CovariateParams) -> f64 {
    omega.ln_treatment(a) + omega.ln_covariates(l)
}

pub fn covariate_loglik_checked(a: usize, l: &[f64], omega: &CovariateParams) -> Result<f64> {
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariate_loglik"));
    }
    if a >= omega.treatment_probs().len() || l.len() != omega.pi().len() + omega.mu().len() {
        return Err(Error::Validation("covariate row and parameter dimensions differ".into()));
    }
    Ok(covariate_loglik(a, l, omega))
}

/// `nu * s2 / chi2_nu`.
pub fn sample_scaled_inv_chi2<R: Rng + ?Sized>(nu: f64, s2: f64, rng: &mut R) -> f64 {
    let chi2 = Gamma::new(nu / 2.0, 2.0).expect("positive shape").sample(rng);
    nu * s2 / chi2
}

pub fn sample_dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Vec<f64> {
    let mut g: Vec<f64> = concentration
        .iter()
        .map(|&c| Gamma::new(c, 1.0).expect("positive concentration").sample(rng))
        .collect();
    let total: f64 = g.iter().sum();
    for v in &mut g {
        *v /= total;
    }
    g
}

pub(crate) fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a == 1.0 && b == 1.0 {
        // Beta(1, 1) is uniform; keep strictly inside (0, 1).
        return rng.random::<f64>().max(f64::MIN_POSITIVE);
    }
    Beta::new(a, b).expect("positive beta parameters").sample(rng)
}

pub fn sample_prior_outcome<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> OutcomeParams {
    let mut theta = OutcomeParams {
        beta: vec![0.0; prior.beta0.len()],
        sigma2: None,
    };
    theta.redraw_from_prior(prior, rng);
    theta
}

impl OutcomeParams {
    /// Overwrites with a fresh base-measure draw, reusing the allocation.
    pub(crate) fn redraw_from_prior<R: Rng + ?Sized>(&mut self, prior: &PriorSpec, rng: &mut R) {
        let sd = prior.tau2_beta.sqrt();
        self.beta.resize(prior.beta0.len(), 0.0);
        for (b, &b0) in self.beta.iter_mut().zip(&prior.beta0) {
            *b = b0 + sd * rng.sample::<f64, _>(StandardNormal);
        }
        self.sigma2 = match prior.dims.outcome {
            VariableKind::Continuous => Some(sample_scaled_inv_chi2(prior.nu_sigma, prior.sigma2_0, rng)),
            VariableKind::Binary => None,
        };
    }
}

pub fn sample_prior_covariate<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> CovariateParams {
    let dims = prior.dims;
    let mut omega = CovariateParams::new(
        vec![0.0; dims.q],
        vec![0.0; dims.p_binary],
        vec![0.0; dims.p_continuous],
        vec![1.0; dims.p_continuous],
    );
    omega.redraw_from_prior(prior, rng);
    omega
}

impl CovariateParams {
    /// Overwrites every component with a fresh base-measure draw, reusing the
    /// allocations. Dimensions must already match `prior.dims`.
    pub(crate) fn redraw_from_prior<R: Rng + ?Sized>(&mut self, prior: &PriorSpec, rng: &mut R) {
        let conc = prior.treatment_concentration();
        let mut total = 0.0;
        for (t, &c) in self.treatment_probs.iter_mut().zip(&conc) {
            *t = if c == 1.0 {
                rand_distr::Exp1.sample(rng)
            } else {
                Gamma::new(c, 1.0).expect("positive concentration").sample(rng)
            };
            total += *t;
        }
        for (t, lt) in self.treatment_probs.iter_mut().zip(self.ln_treatment.iter_mut()) {
            *t /= total;
            *lt = t.ln();
        }
        for r in 0..self.pi.len() {
            let p = sample_beta(prior.a_x, prior.b_x, rng);
            self.pi[r] = p;
            self.ln_pi[r] = p.ln();
            self.ln_1m_pi[r] = (-p).ln_1p();
        }
        for c in 0..self.mu.len() {
            let t2 = sample_scaled_inv_chi2(prior.nu0, prior.tau2_0, rng);
            let z: f64 = rng.sample(StandardNormal);
            self.mu[c] = prior.mu0 + (t2 / prior.c0).sqrt() * z;
            self.tau2[c] = t2;
            self.ln_norm[c] = -0.5 * (crate::math::LN_2PI + t2.ln());
        }
    }
}

/// Independent draws from the outcome and covariate base measures.
pub fn sample_prior_params<R: Rng + ?Sized>(
    prior: &PriorSpec,
    rng: &mut R,
) -> (OutcomeParams, CovariateParams) {
    (sample_prior_outcome(prior, rng), sample_prior_covariate(prior, rng))
}
