//! Predictive regression and CDF of one retained state at a single point.

use crate::error::{Error, Result};
use crate::kernels::{covariate_loglik, PriorPredictive, PriorSpec};
use crate::math::{log_sum_exp, normal_cdf};
use crate::sampler::{HyperState, YCluster};

/// One retained state together with the frozen prior integrals used for
/// the new-cluster terms.
#[derive(Clone, Copy, Debug)]
pub struct DrawContext<'a> {
    pub clusters: &'a [YCluster],
    pub hyper: HyperState,
    pub prior: &'a PriorSpec,
    pub predictive: &'a PriorPredictive,
}

impl DrawContext<'_> {
    pub fn n(&self) -> usize {
        self.clusters.iter().map(|c| c.n).sum()
    }
}

/// Normalized weights `w_1..w_k, w_{k+1}` of the predictive regression at
/// `(a, l)`; the last entry belongs to the prior-predictive term.
pub fn mixture_weights(a: usize, l: &[f64], ctx: &DrawContext<'_>, out: &mut Vec<f64>) -> Result<()> {
    let n = ctx.n() as f64;
    let (at, ao) = (ctx.hyper.alpha_theta, ctx.hyper.alpha_omega);
    let ln_denom = (at + n).ln();
    let ln_k0 = ctx.predictive.ln_k0(a, l);
    out.clear();
    let mut inner = Vec::new();
    for c in ctx.clusters {
        let nj = c.n as f64;
        let ln_nj_ao = (nj + ao).ln();
        inner.clear();
        inner.push(ao.ln() - ln_nj_ao + ln_k0);
        for s in &c.subclusters {
            inner.push((s.n as f64).ln() - ln_nj_ao + covariate_loglik(a, l, &s.omega));
        }
        out.push(nj.ln() - ln_denom + log_sum_exp(&inner));
    }
    out.push(at.ln() - ln_denom + ln_k0);
    let total = log_sum_exp(out);
    if !total.is_finite() {
        return Err(Error::WeightUnderflow);
    }
    for w in out.iter_mut() {
        *w = (*w - total).exp();
    }
    Ok(())
}

/// Posterior predictive `E(Y | A = a, L = l)` for one retained state.
pub fn conditional_mean(a: usize, l: &[f64], ctx: &DrawContext<'_>) -> Result<f64> {
    let mut w = Vec::with_capacity(ctx.clusters.len() + 1);
    mixture_weights(a, l, ctx, &mut w)?;
    let k = ctx.clusters.len();
    let mut acc = w[k] * ctx.predictive.e0(a, l);
    for (wj, c) in w.iter().zip(ctx.clusters) {
        acc += wj * c.theta.mean(a, l);
    }
    Ok(acc)
}

/// Posterior predictive `P(Y <= y | A = a, L = l)` for one retained state.
pub fn conditional_cdf(y: f64, a: usize, l: &[f64], ctx: &DrawContext<'_>) -> Result<f64> {
    let mut w = Vec::with_capacity(ctx.clusters.len() + 1);
    mixture_weights(a, l, ctx, &mut w)?;
    Ok(FrozenPoint::new(a, l, &w, ctx).cdf(y, a, l, ctx.predictive))
}

/// Weights and cluster locations at one population point, so repeated CDF
/// evaluations in `y` skip the kernel work.
#[derive(Clone, Debug)]
pub(crate) struct FrozenPoint {
    weights: Vec<f64>,
    /// Cluster means and residual sds; sd 0 marks a binary outcome.
    locations: Vec<(f64, f64)>,
    pub(crate) mean: f64,
}

impl FrozenPoint {
    pub(crate) fn new(a: usize, l: &[f64], weights: &[f64], ctx: &DrawContext<'_>) -> Self {
        let locations: Vec<(f64, f64)> = ctx
            .clusters
            .iter()
            .map(|c| (c.theta.mean(a, l), c.theta.sigma2.map_or(0.0, f64::sqrt)))
            .collect();
        let k = locations.len();
        let mut mean = weights[k] * ctx.predictive.e0(a, l);
        for (w, loc) in weights.iter().zip(&locations) {
            mean += w * loc.0;
        }
        Self {
            weights: weights.to_vec(),
            locations,
            mean,
        }
    }

    pub(crate) fn cdf(&self, y: f64, a: usize, l: &[f64], predictive: &PriorPredictive) -> f64 {
        let k = self.locations.len();
        let mut acc = self.weights[k] * predictive.cdf0(y, a, l);
        for (w, &(m, sd)) in self.weights.iter().zip(&self.locations) {
            let f = if sd > 0.0 {
                normal_cdf((y - m) / sd)
            } else if y < 0.0 {
                0.0
            } else if y < 1.0 {
                1.0 - m
            } else {
                1.0
            };
            acc += w * f;
        }
        acc.clamp(0.0, 1.0)
    }
}
