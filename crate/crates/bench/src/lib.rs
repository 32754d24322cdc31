//! Fixtures shared by the criterion benches.

use edpcausal::kernels::PriorPredictive;
use edpcausal::rng::{stream, StreamRng};
use edpcausal::sampler::{Chain, RetainedDraw};
use edpcausal::sim::generate_complete;
use edpcausal::{standardize_continuous, Dataset, PredictiveMethod, PriorSpec, SamplerConfig};

/// Standardized scenario data with its empirical-Bayes prior.
pub struct Fixture {
    pub data: Dataset,
    pub prior: PriorSpec,
    pub config: SamplerConfig,
}

impl Fixture {
    pub fn scenario(scenario: u8, n: usize, seed: u64) -> Self {
        let raw = generate_complete(scenario, n, &mut stream(seed, &[])).expect("valid scenario");
        let (data, _) = standardize_continuous(&raw).expect("standardizable");
        let prior = PriorSpec::from_data(&data).expect("reference fit");
        Self { data, prior, config: SamplerConfig::default() }
    }

    pub fn rng(&self, key: u64) -> StreamRng {
        stream(self.config.seed, &[key])
    }

    /// A chain advanced past `warmup` sweeps, so that the partition is no
    /// longer the single initial cluster.
    pub fn warm_chain(&self, warmup: usize) -> Chain<'_> {
        let mut c = Chain::new(&self.data, &self.prior, &self.config, self.rng(0)).expect("chain starts");
        for t in 1..=warmup {
            c.sweep(t, true).expect("sweep");
        }
        c
    }

    /// A retained state after `warmup` sweeps and its prior-predictive
    /// helper.
    pub fn warm_draw(&self, warmup: usize) -> (RetainedDraw, PriorPredictive) {
        let c = self.warm_chain(warmup);
        let draw = c.snapshot(warmup);
        let pp = PriorPredictive::new(&self.prior, PredictiveMethod::Exact, &mut self.rng(1));
        (draw, pp)
    }
}
