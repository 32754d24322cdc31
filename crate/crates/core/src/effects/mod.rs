//! G-computation of causal functionals from retained posterior states.
//!
//! Each selected retained state yields one draw of every queried functional.
//! Potential-outcome means and CDFs integrate the state's predictive
//! regression over a Monte Carlo covariate population drawn from the same
//! state; both treatment arms share that population.

mod mixture;
mod population;
mod summary;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mixture::{conditional_cdf, conditional_mean, mixture_weights, DrawContext};
pub use population::{sample_covariate_population, Conditioning, PopulationLabel, PopulationPoint};
pub use summary::{
    effect_summary, summarize, write_effect_draws, write_effect_summary, EffectDraw, EffectEstimate, Interval,
};

use crate::data::{ScalingParams, VariableKind, VariableSchema};
use crate::error::{Error, Result};
use crate::kernels::{PredictiveMethod, PriorPredictive};
use crate::rng::{purpose, stream};
use crate::sampler::{PosteriorDraws, RetainedDraw};
use mixture::FrozenPoint;

const QUANTILE_TOL: f64 = 1e-6;
const MAX_EXPANSIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// `E(Y^a) - E(Y^a')`.
    MeanDifference,
    /// `E(Y^a) / E(Y^a')`.
    RelativeRisk,
    /// `E(Y^a) - E(Y^a')` on a binary outcome.
    RiskDifference,
    /// Mean difference among subjects receiving `treated_level`.
    AttDifference,
    /// Mean difference given `V = v`.
    ConditionalDifference,
    /// Difference of the `p`th quantiles of `Y^a` and `Y^a'`.
    QuantileDifference,
    /// `P(Y^a <= y)`.
    CdfValue,
}

impl Functional {
    pub const ALL: [Functional; 7] = [
        Functional::MeanDifference,
        Functional::RelativeRisk,
        Functional::RiskDifference,
        Functional::AttDifference,
        Functional::ConditionalDifference,
        Functional::QuantileDifference,
        Functional::CdfValue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Functional::MeanDifference => "mean_difference",
            Functional::RelativeRisk => "relative_risk",
            Functional::RiskDifference => "risk_difference",
            Functional::AttDifference => "att_difference",
            Functional::ConditionalDifference => "conditional_difference",
            Functional::QuantileDifference => "quantile_difference",
            Functional::CdfValue => "cdf_value",
        }
    }

    fn needs_continuous_outcome(self) -> bool {
        matches!(self, Functional::QuantileDifference | Functional::CdfValue)
    }
}

impl std::str::FromStr for Functional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Functional::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown functional `{s}`")))
    }
}

/// A covariate fixed at a value on the original data scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub name: String,
    pub value: f64,
}

fn default_treatment() -> usize {
    1
}

fn default_population() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectQuery {
    pub functional: Functional,
    #[serde(default = "default_treatment")]
    pub treatment: usize,
    #[serde(default)]
    pub reference: usize,
    /// Conditioning treatment level of an ATT query; defaults to `treatment`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treated_level: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Covariate-integration draws per iteration.
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl EffectQuery {
    pub fn new(functional: Functional) -> Self {
        Self {
            functional,
            treatment: 1,
            reference: 0,
            treated_level: None,
            conditions: Vec::new(),
            quantile: None,
            threshold: None,
            population: default_population(),
            label: None,
        }
    }

    pub fn display_label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.functional.name().to_string())
    }

    /// Checks the query against the schema and maps condition values to
    /// the model scale.
    pub fn resolve(&self, schema: &VariableSchema, scaling: &ScalingParams) -> Result<ResolvedQuery> {
        let bad = |m: String| Err(Error::Validation(format!("query `{}`: {m}", self.display_label())));
        let f = self.functional;
        if f.needs_continuous_outcome() && schema.outcome_kind() == VariableKind::Binary {
            return Err(Error::EstimandMismatch(format!(
                "{} requires a continuous outcome",
                f.name()
            )));
        }
        let q = schema.treatment_levels();
        if self.treatment >= q || self.reference >= q {
            return bad(format!("treatment levels must be below {q}"));
        }
        if f != Functional::CdfValue && self.treatment == self.reference {
            return bad("treatment and reference levels coincide".into());
        }
        if self.population == 0 {
            return bad("population must be at least 1".into());
        }
        let conditioning = match f {
            Functional::AttDifference => {
                let level = self.treated_level.unwrap_or(self.treatment);
                if level >= q {
                    return bad(format!("treated level must be below {q}"));
                }
                Conditioning::Treated(level)
            }
            Functional::ConditionalDifference => {
                if self.conditions.is_empty() {
                    return bad("conditional difference needs at least one condition".into());
                }
                let mut vs: Vec<(usize, f64)> = Vec::with_capacity(self.conditions.len());
                for c in &self.conditions {
                    let Some(r) = schema.covariate_index(&c.name) else {
                        return bad(format!("unknown covariate `{}`", c.name));
                    };
                    if vs.iter().any(|&(s, _)| s == r) {
                        return bad(format!("covariate `{}` conditioned twice", c.name));
                    }
                    if !c.value.is_finite() {
                        return bad(format!("condition on `{}` is not finite", c.name));
                    }
                    if schema.is_binary(r) && c.value != 0.0 && c.value != 1.0 {
                        return bad(format!("binary covariate `{}` must be 0 or 1", c.name));
                    }
                    vs.push((r, scaling.forward(r, c.value)));
                }
                Conditioning::Covariates(vs)
            }
            _ => Conditioning::None,
        };
        if !self.conditions.is_empty() && f != Functional::ConditionalDifference {
            return bad("conditions apply only to conditional_difference".into());
        }
        if self.treated_level.is_some() && f != Functional::AttDifference {
            return bad("treated_level applies only to att_difference".into());
        }
        let quantile = match (f, self.quantile) {
            (Functional::QuantileDifference, Some(p)) if p > 0.0 && p < 1.0 => p,
            (Functional::QuantileDifference, _) => return bad("quantile must lie in (0, 1)".into()),
            (_, Some(_)) => return bad("quantile applies only to quantile_difference".into()),
            (_, None) => f64::NAN,
        };
        let threshold = match (f, self.threshold) {
            (Functional::CdfValue, Some(y)) if y.is_finite() => y,
            (Functional::CdfValue, _) => return bad("cdf_value needs a finite threshold".into()),
            (_, Some(_)) => return bad("threshold applies only to cdf_value".into()),
            (_, None) => f64::NAN,
        };
        Ok(ResolvedQuery {
            functional: f,
            treatment: self.treatment,
            reference: self.reference,
            conditioning,
            quantile,
            threshold,
            population: self.population,
        })
    }
}

/// A validated query on the model scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedQuery {
    pub functional: Functional,
    pub treatment: usize,
    pub reference: usize,
    pub conditioning: Conditioning,
    pub quantile: f64,
    pub threshold: f64,
    pub population: usize,
}

fn population_means(a1: usize, a0: usize, pop: &[PopulationPoint], ctx: &DrawContext<'_>) -> Result<(f64, f64)> {
    let mut w = Vec::with_capacity(ctx.clusters.len() + 1);
    let (mut s1, mut s0) = (0.0, 0.0);
    for pt in pop {
        for (a, acc) in [(a1, &mut s1), (a0, &mut s0)] {
            mixture_weights(a, &pt.l, ctx, &mut w)?;
            *acc += FrozenPoint::new(a, &pt.l, &w, ctx).mean;
        }
    }
    let m = pop.len() as f64;
    Ok((s1 / m, s0 / m))
}

/// `E(Y^a)` (or its conditioned variant) by averaging the predictive
/// regression over `m` covariate draws.
pub fn mean_potential_outcome<R: Rng + ?Sized>(
    a: usize,
    ctx: &DrawContext<'_>,
    m: usize,
    conditioning: &Conditioning,
    rng: &mut R,
) -> Result<f64> {
    let pop = sample_covariate_population(ctx, m, conditioning, rng)?;
    Ok(population_means(a, a, &pop, ctx)?.0)
}

fn require_continuous(ctx: &DrawContext<'_>) -> Result<()> {
    match ctx.prior.dims.outcome {
        VariableKind::Continuous => Ok(()),
        VariableKind::Binary => Err(Error::EstimandMismatch(
            "potential-outcome CDFs and quantiles need a continuous outcome".into(),
        )),
    }
}

/// Predictive CDF of `Y^a` averaged over a frozen covariate population.
struct ArmCdf<'a> {
    a: usize,
    pop: &'a [PopulationPoint],
    points: Vec<FrozenPoint>,
    predictive: &'a PriorPredictive,
}

impl<'a> ArmCdf<'a> {
    fn new(a: usize, pop: &'a [PopulationPoint], ctx: &DrawContext<'a>) -> Result<Self> {
        let mut w = Vec::with_capacity(ctx.clusters.len() + 1);
        let mut points = Vec::with_capacity(pop.len());
        for pt in pop {
            mixture_weights(a, &pt.l, ctx, &mut w)?;
            points.push(FrozenPoint::new(a, &pt.l, &w, ctx));
        }
        Ok(Self {
            a,
            pop,
            points,
            predictive: ctx.predictive,
        })
    }

    fn cdf(&self, y: f64) -> f64 {
        let s: f64 = self
            .points
            .iter()
            .zip(self.pop)
            .map(|(fp, pt)| fp.cdf(y, self.a, &pt.l, self.predictive))
            .sum();
        (s / self.points.len() as f64).clamp(0.0, 1.0)
    }

    fn mean(&self) -> f64 {
        self.points.iter().map(|p| p.mean).sum::<f64>() / self.points.len() as f64
    }

    /// Smallest `y` (to within the tolerance) with `F(y) >= p`.
    fn quantile(&self, p: f64) -> Result<f64> {
        let centre = self.mean();
        let mut step = 1.0;
        let (mut lo, mut hi) = (centre, centre);
        let mut expansions = 0;
        while self.cdf(lo) >= p {
            lo = centre - step;
            step *= 2.0;
            expansions += 1;
            if expansions > MAX_EXPANSIONS {
                return Err(Error::BracketFailure(MAX_EXPANSIONS));
            }
        }
        step = 1.0;
        while self.cdf(hi) < p {
            hi = centre + step;
            step *= 2.0;
            expansions += 1;
            if expansions > MAX_EXPANSIONS {
                return Err(Error::BracketFailure(MAX_EXPANSIONS));
            }
        }
        // Invariant: F(lo) < p <= F(hi).
        while hi - lo > QUANTILE_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// `P(Y^a <= y)` over `m` covariate draws.
pub fn potential_outcome_cdf<R: Rng + ?Sized>(
    a: usize,
    y: f64,
    ctx: &DrawContext<'_>,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    require_continuous(ctx)?;
    let pop = sample_covariate_population(ctx, m, &Conditioning::None, rng)?;
    Ok(ArmCdf::new(a, &pop, ctx)?.cdf(y))
}

/// `p`th quantiles of `Y^a1` and `Y^a0` on one shared population.
fn quantile_pair(p: f64, a1: usize, a0: usize, pop: &[PopulationPoint], ctx: &DrawContext<'_>) -> Result<(f64, f64)> {
    let q1 = ArmCdf::new(a1, pop, ctx)?.quantile(p)?;
    let q0 = ArmCdf::new(a0, pop, ctx)?.quantile(p)?;
    Ok((q1, q0))
}

/// `F_1^{-1}(p) - F_0^{-1}(p)` over `m` shared covariate draws.
pub fn quantile_effect<R: Rng + ?Sized>(p: f64, ctx: &DrawContext<'_>, m: usize, rng: &mut R) -> Result<f64> {
    require_continuous(ctx)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Validation(format!("quantile level {p} outside (0, 1)")));
    }
    let pop = sample_covariate_population(ctx, m, &Conditioning::None, rng)?;
    let (q1, q0) = quantile_pair(p, 1, 0, &pop, ctx)?;
    Ok(q1 - q0)
}

/// One functional draw: `(value, arm1, arm0)`; `value` is `None` when a
/// relative-risk denominator is zero.
pub fn evaluate_query<R: Rng + ?Sized>(
    q: &ResolvedQuery,
    ctx: &DrawContext<'_>,
    rng: &mut R,
) -> Result<(Option<f64>, f64, Option<f64>)> {
    let pop = sample_covariate_population(ctx, q.population, &q.conditioning, rng)?;
    let (a1, a0) = (q.treatment, q.reference);
    Ok(match q.functional {
        Functional::CdfValue => {
            require_continuous(ctx)?;
            let v = ArmCdf::new(a1, &pop, ctx)?.cdf(q.threshold);
            (Some(v), v, None)
        }
        Functional::QuantileDifference => {
            require_continuous(ctx)?;
            let (q1, q0) = quantile_pair(q.quantile, a1, a0, &pop, ctx)?;
            (Some(q1 - q0), q1, Some(q0))
        }
        Functional::RelativeRisk => {
            let (m1, m0) = population_means(a1, a0, &pop, ctx)?;
            ((m0 != 0.0).then(|| m1 / m0), m1, Some(m0))
        }
        Functional::MeanDifference
        | Functional::RiskDifference
        | Functional::AttDifference
        | Functional::ConditionalDifference => {
            let (m1, m0) = population_means(a1, a0, &pop, ctx)?;
            (Some(m1 - m0), m1, Some(m0))
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectSettings {
    /// Use every `stride`th retained draw of each chain.
    pub stride: usize,
    pub seed: u64,
}

impl Default for EffectSettings {
    fn default() -> Self {
        Self { stride: 100, seed: 1 }
    }
}

/// Retained draws at positions `0, stride, 2 stride, ...` of each chain.
pub fn selected_draws(posterior: &PosteriorDraws, stride: usize) -> Vec<(usize, &RetainedDraw)> {
    let stride = stride.max(1);
    posterior
        .chains
        .iter()
        .flat_map(|c| c.draws.iter().step_by(stride).map(move |d| (c.chain, d)))
        .collect()
}

/// Evaluates every query on the strided retained draws, in parallel over
/// draws. Streams are keyed by chain, iteration and query index, so results
/// do not depend on scheduling.
pub fn compute_effects(
    posterior: &PosteriorDraws,
    queries: &[EffectQuery],
    settings: EffectSettings,
) -> Result<Vec<EffectEstimate>> {
    if settings.stride == 0 {
        return Err(Error::Validation("stride must be at least 1".into()));
    }
    let resolved = queries
        .iter()
        .map(|q| q.resolve(&posterior.schema, &posterior.scaling))
        .collect::<Result<Vec<_>>>()?;
    let selected = selected_draws(posterior, settings.stride);
    let method = posterior.config.predictive;
    let per_draw: Vec<Vec<EffectDraw>> = selected
        .par_iter()
        .map(|&(chain, d)| {
            let (c, it) = (chain as u64, d.iteration as u64);
            let pp = PriorPredictive::new(
                &posterior.prior,
                method,
                &mut stream(settings.seed, &[purpose::EFFECTS, c, it, purpose::PREDICTIVE]),
            );
            let ctx = DrawContext {
                clusters: &d.clusters,
                hyper: d.hyper,
                prior: &posterior.prior,
                predictive: &pp,
            };
            resolved
                .iter()
                .enumerate()
                .map(|(qi, q)| {
                    let mut rng = stream(settings.seed, &[purpose::EFFECTS, c, it, 0x100 + qi as u64]);
                    let (value, arm1, arm0) = evaluate_query(q, &ctx, &mut rng).map_err(|e| e.at_iteration(d.iteration))?;
                    Ok(EffectDraw {
                        chain,
                        iteration: d.iteration,
                        value,
                        arm1,
                        arm0,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let m0 = match method {
        PredictiveMethod::MonteCarlo { draws } => Some(draws),
        PredictiveMethod::Exact => None,
    };
    queries
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            let draws = per_draw.iter().map(|row| row[qi].clone()).collect();
            effect_summary(draws, q, m0)
        })
        .collect()
}
