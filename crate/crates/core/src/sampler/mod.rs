//! Nested collapsed Gibbs sampler with auxiliary parameters.
//!
//! One sweep: impute missing covariates, reassign every subject, refresh all
//! cluster parameters, then update both concentration parameters.

mod draws;
mod hyper;
mod impute;
mod state;

pub use draws::{read_draws, write_draws, ChainDraws, ChainStats, PosteriorDraws, RetainedDraw};
pub use hyper::{
    log_alpha_omega_target, mixture_odds, update_alpha_omega, update_alpha_theta, HyperState,
};
pub use impute::{binary_full_conditional, impute_missing_binary, impute_missing_continuous};
pub use state::{
    membership_log_weights, relabel_and_augment, update_cluster_membership, Choice, ClusterState, Membership,
    ProposalTable, XCluster, YCluster,
};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{standardize_continuous, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{
    update_covariate_params, update_outcome_params, MhTuner, Observations, OutcomeParams, PredictiveMethod, PriorSpec,
};
use crate::rng::{purpose, stream, StreamRng};

/// How the partition is initialized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    SingleCluster,
    Singletons,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Auxiliary clusters per level in the membership update.
    pub aux: usize,
    pub chains: usize,
    pub seed: u64,
    /// Prior-predictive integration used in post-processing.
    pub predictive: PredictiveMethod,
    /// Initial random-walk scale for logistic coefficients; `None` uses
    /// `2.38 / sqrt(d)`.
    pub beta_scale: Option<f64>,
    /// Adapt the coefficient proposal scale during burn-in.
    pub adapt: bool,
    /// Proposal sd of the log-scale walk on `alpha_omega`.
    pub alpha_omega_step: f64,
    /// Multiplier on the subcluster sd for continuous-imputation proposals.
    pub impute_scale: f64,
    /// Hold both concentrations fixed instead of updating them.
    pub fixed_alpha: Option<HyperState>,
    pub init: InitMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 2_000,
            thin: 1,
            aux: 5,
            chains: 1,
            seed: 1,
            predictive: PredictiveMethod::default(),
            beta_scale: None,
            adapt: true,
            alpha_omega_step: 0.5,
            impute_scale: 1.0,
            fixed_alpha: None,
            init: InitMode::SingleCluster,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.iterations <= self.burn_in {
            return fail(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            ));
        }
        if self.thin == 0 {
            return fail("thin must be at least 1".into());
        }
        if self.aux == 0 {
            return fail("aux must be at least 1".into());
        }
        if self.chains == 0 {
            return fail("chains must be at least 1".into());
        }
        if let PredictiveMethod::MonteCarlo { draws: 0 } = self.predictive {
            return fail("predictive draws must be at least 1".into());
        }
        for (name, v) in [("alpha_omega_step", self.alpha_omega_step), ("impute_scale", self.impute_scale)] {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(s) = self.beta_scale {
            if !(s > 0.0) || !s.is_finite() {
                return fail(format!("beta_scale must be positive, got {s}"));
            }
        }
        if let Some(h) = self.fixed_alpha {
            if !(h.alpha_theta > 0.0 && h.alpha_omega > 0.0) {
                return fail("fixed concentrations must be positive".into());
            }
        }
        Ok(())
    }

    /// Number of states a chain retains.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Mutable per-chain state.
pub struct Chain<'a> {
    data: &'a Dataset,
    prior: &'a PriorSpec,
    config: &'a SamplerConfig,
    /// Completed covariate matrix, row-major.
    l: Vec<f64>,
    /// Missing cells `(i, r)` in row order.
    missing: Vec<(usize, usize)>,
    pub state: ClusterState,
    pub hyper: HyperState,
    tuner: MhTuner,
    table: ProposalTable,
    weights: Vec<f64>,
    stats: ChainStats,
    rng: StreamRng,
}

impl<'a> Chain<'a> {
    /// Initializes a chain on standardized data.
    pub fn new(data: &'a Dataset, prior: &'a PriorSpec, config: &'a SamplerConfig, mut rng: StreamRng) -> Result<Self> {
        config.validate()?;
        prior.validate()?;
        data.validate()?;
        let n = data.n();
        let p = data.p();
        if n == 0 {
            return Err(Error::Insufficient("dataset has no rows".into()));
        }
        let mut l = data.l().to_vec();
        let mut missing = Vec::with_capacity(data.missing_count());
        for i in 0..n {
            for r in 0..p {
                if data.is_missing(i, r) {
                    missing.push((i, r));
                }
            }
        }
        // Missing entries start as resampled observed values of their column.
        for r in 0..p {
            let observed: Vec<f64> = (0..n).filter(|&i| !data.is_missing(i, r)).map(|i| l[i * p + r]).collect();
            let cells = missing.iter().filter(|c| c.1 == r);
            if observed.is_empty() {
                if cells.clone().next().is_some() {
                    return Err(Error::Insufficient(format!(
                        "covariate `{}` has no observed values",
                        data.schema().covariates()[r].name
                    )));
                }
                continue;
            }
            for &(i, _) in cells {
                l[i * p + r] = observed[rng.random_range(0..observed.len())];
            }
        }
        let mut tuner = if config.adapt {
            MhTuner::new(prior.beta0.len())
        } else {
            MhTuner::frozen(prior.beta0.len())
        };
        if let Some(s) = config.beta_scale {
            tuner.log_scale = s.ln();
        }
        let hyper = config.fixed_alpha.unwrap_or_else(|| HyperState::from_prior(prior, &mut rng));
        let start = OutcomeParams {
            beta: prior.beta0.clone(),
            sigma2: prior.dims.outcome.is_continuous().then_some(prior.sigma2_0),
        };
        let state = {
            let obs = Observations {
                y: data.y(),
                a: data.a(),
                l: &l,
                p,
            };
            match config.init {
                InitMode::SingleCluster => {
                    let all: Vec<usize> = (0..n).collect();
                    let omega = update_covariate_params(&obs, &all, prior, &mut rng);
                    let theta = update_outcome_params(&obs, &all, &start, prior, &mut tuner, &mut rng);
                    ClusterState::single(n, theta, omega)
                }
                InitMode::Singletons => {
                    let labels = (0..n).map(|j| Membership { y: j, x: 0 }).collect();
                    let params = (0..n)
                        .map(|i| {
                            let theta = update_outcome_params(&obs, &[i], &start, prior, &mut tuner, &mut rng);
                            (theta, vec![update_covariate_params(&obs, &[i], prior, &mut rng)])
                        })
                        .collect();
                    ClusterState::from_parts(labels, params)?
                }
            }
        };
        Ok(Self {
            data,
            prior,
            config,
            l,
            missing,
            state,
            hyper,
            tuner,
            table: ProposalTable::default(),
            weights: Vec::new(),
            stats: ChainStats::default(),
            rng,
        })
    }

    pub fn completed_covariates(&self) -> &[f64] {
        &self.l
    }

    /// Replaces the outcome, treatment and covariates in place (no missing
    /// cells). Used by joint-distribution tests that regenerate data.
    pub fn overwrite_data(&mut self, l: &[f64]) {
        assert!(self.missing.is_empty(), "overwrite requires complete data");
        self.l.copy_from_slice(l);
    }

    pub fn stats(&self) -> &ChainStats {
        &self.stats
    }

    /// Current imputed values, in missing-cell order.
    pub fn imputed(&self) -> Vec<f64> {
        let p = self.data.p();
        self.missing.iter().map(|&(i, r)| self.l[i * p + r]).collect()
    }

    /// One full sweep with externally supplied outcome and treatment vectors.
    pub fn sweep_with(&mut self, y: &[f64], a: &[usize], iteration: usize, burning: bool) -> Result<()> {
        self.sweep_inner(y, a, burning).map_err(|e| e.at_iteration(iteration))?;
        #[cfg(debug_assertions)]
        if let Err(msg) = self.state.check_invariants() {
            panic!("bookkeeping violated at iteration {iteration}: {msg}");
        }
        Ok(())
    }

    pub fn sweep(&mut self, iteration: usize, burning: bool) -> Result<()> {
        let data = self.data;
        self.sweep_with(data.y(), data.a(), iteration, burning)
    }

    fn sweep_inner(&mut self, y: &[f64], a: &[usize], burning: bool) -> Result<()> {
        let p = self.data.p();
        let prior = self.prior;
        let m = self.config.aux;

        // (1) Data augmentation.
        let p_binary = prior.dims.p_binary;
        for &(i, r) in &self.missing {
            let (theta, omega) = self.state.params_of(i);
            let row = &mut self.l[i * p..(i + 1) * p];
            if r < p_binary {
                impute_missing_binary(y[i], a[i], row, r, theta, omega, &mut self.rng);
            } else {
                let ok =
                    impute_missing_continuous(y[i], a[i], row, r, theta, omega, self.config.impute_scale, &mut self.rng);
                self.stats.impute_proposed += 1;
                self.stats.impute_accepted += u64::from(ok);
            }
        }

        let obs = Observations { y, a, l: &self.l, p };

        // (2) Memberships.
        for i in 0..obs.n() {
            state::relabel_into(i, &mut self.state, prior, m, &mut self.table, &mut self.rng);
            state::membership_step(
                i,
                &mut self.state,
                &self.table,
                &obs,
                self.hyper.alpha_theta,
                self.hyper.alpha_omega,
                &mut self.weights,
                &mut self.rng,
            )?;
        }

        // (3) Parameters.
        update_all_params(&mut self.state, &obs, prior, &mut self.tuner, &mut self.rng);
        if burning {
            self.tuner.adapt();
        }

        // (4) Concentrations.
        if self.config.fixed_alpha.is_none() {
            let k = self.state.k();
            self.hyper.alpha_theta = update_alpha_theta(self.hyper.alpha_theta, k, obs.n(), prior, &mut self.rng);
            let sizes: Vec<(usize, usize)> =
                self.state.clusters().iter().map(|c| (c.n, c.subclusters.len())).collect();
            let (alpha, accepted) =
                update_alpha_omega(self.hyper.alpha_omega, &sizes, prior, self.config.alpha_omega_step, &mut self.rng);
            self.hyper.alpha_omega = alpha;
            self.stats.alpha_omega_proposed += 1;
            self.stats.alpha_omega_accepted += u64::from(accepted);
        }
        if !self.hyper.alpha_theta.is_finite() || !self.hyper.alpha_omega.is_finite() {
            return Err(Error::NonFinite("concentration parameters"));
        }
        Ok(())
    }

    /// Freezes proposal adaptation and resets acceptance counters.
    pub fn end_burn_in(&mut self) {
        self.tuner.stop_adapting();
        self.stats = ChainStats::default();
    }

    /// Copy of the current state as a retained draw.
    pub fn snapshot(&self, iteration: usize) -> RetainedDraw {
        RetainedDraw {
            iteration,
            hyper: self.hyper,
            clusters: self.state.clusters().to_vec(),
            imputed: self.imputed(),
        }
    }

    fn finish_stats(&mut self) -> ChainStats {
        let mut s = self.stats.clone();
        s.beta_proposed = self.tuner.proposed;
        s.beta_accepted = self.tuner.accepted;
        s.beta_log_scale = self.tuner.log_scale;
        s
    }
}

/// Refreshes every occupied cluster's outcome parameters and every
/// subcluster's covariate parameters given the partition.
pub fn update_all_params<R: Rng + ?Sized>(
    state: &mut ClusterState,
    obs: &Observations<'_>,
    prior: &PriorSpec,
    tuner: &mut MhTuner,
    rng: &mut R,
) {
    let members = state.members();
    for (cluster, subs) in state.clusters_mut().iter_mut().zip(&members) {
        let all: Vec<usize> = subs.iter().flatten().copied().collect();
        debug_assert!(!all.is_empty(), "empty cluster reached the parameter update");
        cluster.theta = update_outcome_params(obs, &all, &cluster.theta, prior, tuner, rng);
        for (sub, idx) in cluster.subclusters.iter_mut().zip(subs) {
            debug_assert!(!idx.is_empty(), "empty subcluster reached the parameter update");
            sub.omega = update_covariate_params(obs, idx, prior, rng);
        }
    }
}

/// Runs one chain on standardized data and collects its retained states.
pub fn run_chain(data: &Dataset, config: &SamplerConfig, prior: &PriorSpec, chain: usize) -> Result<ChainDraws> {
    let rng = stream(config.seed, &[purpose::CHAIN, chain as u64]);
    let mut c = Chain::new(data, prior, config, rng)?;
    let mut draws = Vec::with_capacity(config.retained());
    for t in 1..=config.iterations {
        let burning = t <= config.burn_in;
        c.sweep(t, burning)?;
        if t == config.burn_in {
            c.end_burn_in();
        }
        if !burning && (t - config.burn_in) % config.thin == 0 {
            draws.push(c.snapshot(t));
        }
    }
    Ok(ChainDraws {
        chain,
        stats: c.finish_stats(),
        draws,
    })
}

/// Standardizes the data, resolves the prior (empirical-Bayes `beta0` when
/// none is given) and runs all chains in parallel.
pub fn fit(data: &Dataset, config: &SamplerConfig, prior: Option<PriorSpec>) -> Result<PosteriorDraws> {
    config.validate()?;
    let (std_data, scaling) = standardize_continuous(data)?;
    let prior = match prior {
        Some(p) => p,
        None => PriorSpec::from_data(&std_data)?,
    };
    let chains = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(&std_data, config, &prior, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorDraws {
        schema: data.schema().clone(),
        prior,
        scaling,
        config: config.clone(),
        missing_cells: std_data.missing_cells(),
        chains,
    })
}
