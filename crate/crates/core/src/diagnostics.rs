//! Convergence and mixing diagnostics over chains and effect draws.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::effects::EffectEstimate;
use crate::error::{Error, Result};
use crate::math::{mean, sample_variance};
use crate::sampler::PosteriorDraws;

const MIN_LENGTH: usize = 10;

/// Potential scale reduction `sqrt((W (n-1)/n + B/n) / W)` of two or more
/// equal-length chains.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Insufficient(format!("{} chains, need at least 2", chains.len())));
    }
    let n = chains[0].len();
    if n < MIN_LENGTH || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Insufficient(format!(
            "chains must share a length of at least {MIN_LENGTH}"
        )));
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| sample_variance(c)).collect::<Vec<_>>());
    if !(w > 0.0) {
        return Err(Error::DegenerateTrace("zero within-chain variance".into()));
    }
    let nf = n as f64;
    let b = nf * sample_variance(&means);
    Ok(((w * (nf - 1.0) / nf + b / nf) / w).sqrt())
}

/// Initial-monotone-sequence ESS of one trace, capped at its length.
pub fn effective_sample_size(trace: &[f64]) -> Result<f64> {
    let n = trace.len();
    if n < MIN_LENGTH {
        return Err(Error::Insufficient(format!("trace of length {n}, need {MIN_LENGTH}")));
    }
    let m = mean(trace);
    let centred: Vec<f64> = trace.iter().map(|x| x - m).collect();
    let autocov = |lag: usize| centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let g0 = autocov(0);
    if !(g0 > 0.0) {
        return Err(Error::DegenerateTrace("constant trace".into()));
    }
    // tau = -1 + 2 sum_k P_k, P_k = rho_{2k} + rho_{2k+1}, positive and
    // forced nonincreasing.
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = (autocov(2 * k) + autocov(2 * k + 1)) / g0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 1;
    }
    let tau = -1.0 + 2.0 * sum;
    let nf = n as f64;
    Ok(if tau > 1.0 { nf / tau } else { nf })
}

/// Diagnostics of one scalar tracked across chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub scalar: String,
    pub traces: Vec<Vec<f64>>,
    pub mean: f64,
    pub sd: f64,
    /// `None` with a single chain or a degenerate trace.
    pub gelman_rubin: Option<f64>,
    /// Sum of per-chain ESS; `None` if every trace is degenerate.
    pub ess: Option<f64>,
    pub draws: usize,
}

impl ChainSummary {
    pub fn new(scalar: impl Into<String>, traces: Vec<Vec<f64>>) -> Self {
        let pooled: Vec<f64> = traces.iter().flatten().copied().collect();
        let usable: Vec<Vec<f64>> = {
            // Truncate to a common length so unequal chains can be compared.
            let len = traces.iter().map(Vec::len).min().unwrap_or(0);
            traces.iter().map(|t| t[..len].to_vec()).collect()
        };
        let gelman_rubin = gelman_rubin(&usable).ok();
        let per_chain: Vec<f64> = traces.iter().filter_map(|t| effective_sample_size(t).ok()).collect();
        Self {
            scalar: scalar.into(),
            mean: if pooled.is_empty() { f64::NAN } else { mean(&pooled) },
            sd: if pooled.len() < 2 { f64::NAN } else { sample_variance(&pooled).sqrt() },
            gelman_rubin,
            ess: (!per_chain.is_empty()).then(|| per_chain.iter().sum()),
            draws: pooled.len(),
            traces,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub chain: usize,
    pub iteration: usize,
    pub k: usize,
    /// `n_j` of every y-cluster.
    pub sizes: Vec<usize>,
    /// `k_j`, the number of x-subclusters of every y-cluster.
    pub subclusters: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancySummary {
    pub rows: Vec<OccupancyRow>,
    /// Number of retained draws with each value of `k`.
    pub k_frequency: BTreeMap<usize, usize>,
    pub modal_k: usize,
    pub mean_k: f64,
}

pub fn cluster_occupancy_summary(draws: &PosteriorDraws) -> Result<OccupancySummary> {
    let rows: Vec<OccupancyRow> = draws
        .iter()
        .map(|(chain, d)| OccupancyRow {
            chain,
            iteration: d.iteration,
            k: d.k(),
            sizes: d.clusters.iter().map(|c| c.n).collect(),
            subclusters: d.clusters.iter().map(|c| c.subclusters.len()).collect(),
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::Insufficient("no retained draws".into()));
    }
    let mut k_frequency = BTreeMap::new();
    for r in &rows {
        *k_frequency.entry(r.k).or_insert(0) += 1;
    }
    // Ties go to the smaller k.
    let modal_k = k_frequency
        .iter()
        .fold((0, 0), |best, (&k, &c)| if c > best.1 { (k, c) } else { best })
        .0;
    let mean_k = rows.iter().map(|r| r.k as f64).sum::<f64>() / rows.len() as f64;
    Ok(OccupancySummary {
        rows,
        k_frequency,
        modal_k,
        mean_k,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub chain: usize,
    pub beta: Option<f64>,
    pub alpha_omega: Option<f64>,
    pub impute: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub summaries: Vec<ChainSummary>,
    pub acceptance: Vec<AcceptanceRates>,
    pub occupancy: OccupancySummary,
}

/// Summaries of the concentrations, `k`, and any effect traces.
pub fn diagnose(posterior: &PosteriorDraws, effects: &[EffectEstimate]) -> Result<DiagnosticReport> {
    let per_chain = |f: &dyn Fn(&crate::sampler::RetainedDraw) -> f64| -> Vec<Vec<f64>> {
        posterior.chains.iter().map(|c| c.draws.iter().map(f).collect()).collect()
    };
    let mut summaries = vec![
        ChainSummary::new("alpha_theta", per_chain(&|d| d.hyper.alpha_theta)),
        ChainSummary::new("alpha_omega", per_chain(&|d| d.hyper.alpha_omega)),
        ChainSummary::new("k", per_chain(&|d| d.k() as f64)),
    ];
    for e in effects {
        let traces = posterior
            .chains
            .iter()
            .map(|c| {
                e.draws
                    .iter()
                    .filter(|d| d.chain == c.chain)
                    .filter_map(|d| d.value)
                    .collect()
            })
            .collect();
        summaries.push(ChainSummary::new(e.label.clone(), traces));
    }
    let acceptance = posterior
        .chains
        .iter()
        .map(|c| AcceptanceRates {
            chain: c.chain,
            beta: c.stats.beta_acceptance(),
            alpha_omega: c.stats.alpha_omega_acceptance(),
            impute: c.stats.impute_acceptance(),
        })
        .collect();
    Ok(DiagnosticReport {
        summaries,
        acceptance,
        occupancy: cluster_occupancy_summary(posterior)?,
    })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

impl DiagnosticReport {
    /// Plain-text tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24} {:>8} {:>12} {:>12} {:>8} {:>10}", "scalar", "draws", "mean", "sd", "rhat", "ess");
        for c in &self.summaries {
            let _ = writeln!(
                s,
                "{:<24} {:>8} {:>12.5} {:>12.5} {:>8} {:>10}",
                c.scalar,
                c.draws,
                c.mean,
                c.sd,
                opt(c.gelman_rubin, 3),
                opt(c.ess, 1)
            );
        }
        let _ = writeln!(s, "\n{:<8} {:>10} {:>12} {:>10}", "chain", "beta", "alpha_omega", "impute");
        for a in &self.acceptance {
            let _ = writeln!(
                s,
                "{:<8} {:>10} {:>12} {:>10}",
                a.chain,
                opt(a.beta, 3),
                opt(a.alpha_omega, 3),
                opt(a.impute, 3)
            );
        }
        let _ = writeln!(s, "\nk frequency (mode {}, mean {:.2})", self.occupancy.modal_k, self.occupancy.mean_k);
        for (k, c) in &self.occupancy.k_frequency {
            let _ = writeln!(s, "{k:>4} {c:>8}");
        }
        s
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    /// Long-format traces: scalar, chain, index, value.
    pub fn write_traces(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["scalar", "chain", "index", "value"])?;
        for c in &self.summaries {
            for (chain, t) in c.traces.iter().enumerate() {
                for (i, v) in t.iter().enumerate() {
                    w.write_record([c.scalar.clone(), chain.to_string(), i.to_string(), v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}
