//! Posterior summaries of functional draws and their export formats.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EffectQuery, Functional};
use crate::error::{Error, Result};
use crate::math::quantile_sorted;

/// Functional value at one retained iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectDraw {
    pub chain: usize,
    pub iteration: usize,
    /// `None` when the draw is excluded (zero relative-risk denominator).
    pub value: Option<f64>,
    /// Arm-level quantity for the `treatment` level.
    pub arm1: f64,
    /// Arm-level quantity for the `reference` level; absent for CDF values.
    pub arm0: Option<f64>,
}

/// Median and equal-tailed interval of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Type-7 median and 2.5%/97.5% quantiles; needs at least two values.
pub fn summarize(values: &[f64]) -> Result<Interval> {
    if values.len() < 2 {
        return Err(Error::Insufficient(format!(
            "{} functional draws, need at least 2",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("functional draws"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Interval {
        median: quantile_sorted(&sorted, 0.5),
        lower: quantile_sorted(&sorted, 0.025),
        upper: quantile_sorted(&sorted, 0.975),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub label: String,
    pub functional: Functional,
    pub query: EffectQuery,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    /// Draws flagged and excluded from the summary.
    pub excluded: usize,
    /// Covariate-integration draws per iteration.
    pub population: usize,
    /// Prior-predictive draws per iteration; `None` for exact integration.
    pub predictive_draws: Option<usize>,
    pub iterations_used: usize,
    pub draws: Vec<EffectDraw>,
}

/// Summarizes per-iteration draws, skipping and counting excluded ones.
pub fn effect_summary(
    draws: Vec<EffectDraw>,
    query: &EffectQuery,
    predictive_draws: Option<usize>,
) -> Result<EffectEstimate> {
    let values: Vec<f64> = draws.iter().filter_map(|d| d.value).collect();
    let interval = summarize(&values)?;
    Ok(EffectEstimate {
        label: query.display_label(),
        functional: query.functional,
        query: query.clone(),
        median: interval.median,
        lower: interval.lower,
        upper: interval.upper,
        excluded: draws.len() - values.len(),
        population: query.population,
        predictive_draws,
        iterations_used: draws.len(),
        draws,
    })
}

/// One row per estimate and iteration: label, functional, chain, iteration,
/// value, arm1, arm0. Excluded values and absent arms are empty cells.
pub fn write_effect_draws(estimates: &[EffectEstimate], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "functional", "chain", "iteration", "value", "arm1", "arm0"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in estimates {
        for d in &e.draws {
            w.write_record([
                e.label.clone(),
                e.functional.name().to_string(),
                d.chain.to_string(),
                d.iteration.to_string(),
                opt(d.value),
                d.arm1.to_string(),
                opt(d.arm0),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    label: &'a str,
    functional: Functional,
    median: f64,
    lower: f64,
    upper: f64,
    excluded: usize,
    population: usize,
    predictive_draws: Option<usize>,
    iterations_used: usize,
    query: &'a EffectQuery,
}

/// JSON array of summaries without the per-iteration draws.
pub fn write_effect_summary(estimates: &[EffectEstimate], path: impl AsRef<Path>) -> Result<()> {
    let records: Vec<SummaryRecord<'_>> = estimates
        .iter()
        .map(|e| SummaryRecord {
            label: &e.label,
            functional: e.functional,
            median: e.median,
            lower: e.lower,
            upper: e.upper,
            excluded: e.excluded,
            population: e.population,
            predictive_draws: e.predictive_draws,
            iterations_used: e.iterations_used,
            query: &e.query,
        })
        .collect();
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(file, &records)?;
    Ok(())
}
