//! Monte Carlo covariate populations drawn from one retained state.

use rand::Rng;

use super::mixture::DrawContext;
use crate::error::{Error, Result};
use crate::kernels::{sample_prior_covariate, CovariateParams};

/// Which covariate distribution the population represents.
#[derive(Clone, Debug, PartialEq)]
pub enum Conditioning {
    /// The marginal covariate distribution.
    None,
    /// Covariates among subjects receiving this treatment level.
    Treated(usize),
    /// `W | V = v`; pairs of covariate index and standardized value.
    Covariates(Vec<(usize, f64)>),
}

/// Component a population point was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PopulationLabel {
    Existing { j: usize, l: usize },
    NewSubcluster { j: usize },
    NewCluster,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationPoint {
    pub l: Vec<f64>,
    pub label: PopulationLabel,
}

/// Log selection weights of every `(j, l)` component, the new subcluster of
/// each `j`, and a new cluster, including the conditioning tilt.
pub(crate) fn component_log_weights(
    ctx: &DrawContext<'_>,
    conditioning: &Conditioning,
) -> Vec<(PopulationLabel, f64)> {
    let n = ctx.n() as f64;
    let (at, ao) = (ctx.hyper.alpha_theta, ctx.hyper.alpha_omega);
    let ln_denom = (at + n).ln();
    let tilt = |omega: &CovariateParams| match conditioning {
        Conditioning::None => 0.0,
        Conditioning::Treated(a) => omega.ln_treatment(*a),
        Conditioning::Covariates(vs) => vs.iter().map(|&(r, v)| omega.ln_component(r, v)).sum(),
    };
    let tilt0 = match conditioning {
        Conditioning::None => 0.0,
        Conditioning::Treated(a) => ctx.predictive.ln_k0_treatment(*a),
        Conditioning::Covariates(vs) => vs.iter().map(|&(r, v)| ctx.predictive.ln_k0_component(r, v)).sum(),
    };
    let mut out = Vec::new();
    for (j, c) in ctx.clusters.iter().enumerate() {
        let nj = c.n as f64;
        let base = nj.ln() - ln_denom - (nj + ao).ln();
        for (l, s) in c.subclusters.iter().enumerate() {
            out.push((PopulationLabel::Existing { j, l }, base + (s.n as f64).ln() + tilt(&s.omega)));
        }
        out.push((PopulationLabel::NewSubcluster { j }, base + ao.ln() + tilt0));
    }
    out.push((PopulationLabel::NewCluster, at.ln() - ln_denom + tilt0));
    out
}

/// Draws `m` covariate vectors `l` with their component labels.
///
/// Unconditioned: the component is drawn from the nested urn and `l` from
/// its covariate kernel, with fresh prior parameters for new components.
/// Conditioned: component probabilities are tilted by the kernel of the
/// conditioning event; for `V = v` only `W` is drawn and `V` is fixed.
pub fn sample_covariate_population<R: Rng + ?Sized>(
    ctx: &DrawContext<'_>,
    m: usize,
    conditioning: &Conditioning,
    rng: &mut R,
) -> Result<Vec<PopulationPoint>> {
    let comps = component_log_weights(ctx, conditioning);
    let max = comps.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::PositivityViolation);
    }
    let mut cumulative = Vec::with_capacity(comps.len());
    let mut total = 0.0;
    for c in &comps {
        total += (c.1 - max).exp();
        cumulative.push(total);
    }
    let p = ctx.prior.dims.p();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let u = rng.random::<f64>() * total;
        let idx = cumulative.partition_point(|&c| c <= u).min(comps.len() - 1);
        let label = comps[idx].0;
        let mut l = vec![0.0; p];
        match label {
            PopulationLabel::Existing { j, l: sub } => {
                ctx.clusters[j].subclusters[sub].omega.sample_covariates(&mut l, rng)
            }
            _ => sample_prior_covariate(ctx.prior, rng).sample_covariates(&mut l, rng),
        }
        if let Conditioning::Covariates(vs) = conditioning {
            for &(r, v) in vs {
                l[r] = v;
            }
        }
        out.push(PopulationPoint { l, label });
    }
    Ok(out)
}
