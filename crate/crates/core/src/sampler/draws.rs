//! Retained posterior states and their line-delimited JSON file format.
//!
//! A draws file holds one JSON object per line. The first line is a
//! `header` record (schema, prior, scaling, sampler config, missing cells).
//! Each chain contributes one `chain` record with its acceptance statistics,
//! followed by one `draw` record per retained iteration holding the
//! concentrations, every cluster's size and parameters, and the imputed
//! covariate values in missing-cell order (standardized scale).

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HyperState, SamplerConfig, YCluster};
use crate::data::{ScalingParams, VariableSchema};
use crate::error::{Error, Result};
use crate::kernels::PriorSpec;

const FORMAT: &str = "edpcausal-draws";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetainedDraw {
    pub iteration: usize,
    pub hyper: HyperState,
    pub clusters: Vec<YCluster>,
    pub imputed: Vec<f64>,
}

impl RetainedDraw {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn n(&self) -> usize {
        self.clusters.iter().map(|c| c.n).sum()
    }
}

/// Post-burn-in acceptance counts of one chain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub beta_accepted: u64,
    pub beta_proposed: u64,
    pub beta_log_scale: f64,
    pub alpha_omega_accepted: u64,
    pub alpha_omega_proposed: u64,
    pub impute_accepted: u64,
    pub impute_proposed: u64,
}

fn rate(acc: u64, prop: u64) -> Option<f64> {
    (prop > 0).then(|| acc as f64 / prop as f64)
}

impl ChainStats {
    pub fn beta_acceptance(&self) -> Option<f64> {
        rate(self.beta_accepted, self.beta_proposed)
    }

    pub fn alpha_omega_acceptance(&self) -> Option<f64> {
        rate(self.alpha_omega_accepted, self.alpha_omega_proposed)
    }

    pub fn impute_acceptance(&self) -> Option<f64> {
        rate(self.impute_accepted, self.impute_proposed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub chain: usize,
    pub stats: ChainStats,
    pub draws: Vec<RetainedDraw>,
}

/// Everything post-processing needs: retained states plus the prior and
/// scaling they were produced under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub schema: VariableSchema,
    pub prior: PriorSpec,
    pub scaling: ScalingParams,
    pub config: SamplerConfig,
    pub missing_cells: Vec<(usize, usize)>,
    pub chains: Vec<ChainDraws>,
}

impl PosteriorDraws {
    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    /// All retained draws, chain-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &RetainedDraw)> {
        self.chains.iter().flat_map(|c| c.draws.iter().map(move |d| (c.chain, d)))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        format: String,
        version: u32,
        schema: VariableSchema,
        prior: PriorSpec,
        scaling: ScalingParams,
        config: SamplerConfig,
        missing_cells: Vec<(usize, usize)>,
    },
    Chain {
        chain: usize,
        stats: ChainStats,
    },
    Draw {
        chain: usize,
        #[serde(flatten)]
        draw: RetainedDraw,
    },
}

pub fn write_draws(draws: &PosteriorDraws, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let header = Record::Header {
        format: FORMAT.into(),
        version: VERSION,
        schema: draws.schema.clone(),
        prior: draws.prior.clone(),
        scaling: draws.scaling.clone(),
        config: draws.config.clone(),
        missing_cells: draws.missing_cells.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for c in &draws.chains {
        serde_json::to_writer(
            &mut w,
            &Record::Chain {
                chain: c.chain,
                stats: c.stats.clone(),
            },
        )?;
        w.write_all(b"\n")?;
        for d in &c.draws {
            // Borrowing serializer avoids cloning the cluster blocks.
            #[derive(Serialize)]
            struct DrawRef<'a> {
                record: &'static str,
                chain: usize,
                #[serde(flatten)]
                draw: &'a RetainedDraw,
            }
            serde_json::to_writer(
                &mut w,
                &DrawRef {
                    record: "draw",
                    chain: c.chain,
                    draw: d,
                },
            )?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_draws(path: impl AsRef<Path>) -> Result<PosteriorDraws> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out: Option<PosteriorDraws> = None;
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row: k + 1,
            message: e.to_string(),
        })?;
        match (record, out.as_mut()) {
            (
                Record::Header {
                    format,
                    version,
                    schema,
                    prior,
                    scaling,
                    config,
                    missing_cells,
                },
                None,
            ) => {
                if format != FORMAT || version != VERSION {
                    return Err(Error::Validation(format!("unsupported draws file {format} v{version}")));
                }
                out = Some(PosteriorDraws {
                    schema,
                    prior,
                    scaling,
                    config,
                    missing_cells,
                    chains: Vec::new(),
                });
            }
            (Record::Chain { chain, stats }, Some(d)) => d.chains.push(ChainDraws {
                chain,
                stats,
                draws: Vec::new(),
            }),
            (Record::Draw { chain, draw }, Some(d)) => match d.chains.last_mut() {
                Some(c) if c.chain == chain => c.draws.push(draw),
                _ => {
                    return Err(Error::Parse {
                        row: k + 1,
                        message: format!("draw for chain {chain} outside its chain block"),
                    })
                }
            },
            (_, _) => {
                return Err(Error::Parse {
                    row: k + 1,
                    message: "header must be the first record and appear once".into(),
                })
            }
        }
    }
    out.ok_or_else(|| Error::Validation("draws file is empty".into()))
}
