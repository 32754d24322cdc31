//! Bayesian causal inference with an enriched Dirichlet process mixture.
//!
//! The outcome is modelled by a mixture of local GLMs whose clusters are
//! split further by the joint distribution of treatment and covariates.
//! Causal effects follow from g-computation over posterior draws.

pub mod data;
pub mod diagnostics;
pub mod effects;
pub mod error;
pub mod kernels;
pub mod math;
pub mod rng;
pub mod sampler;
pub mod sim;

pub use data::{
    load_dataset, save_dataset, standardize_continuous, CovariateSpec, Dataset, ScalingParams, VariableKind,
    VariableSchema,
};
pub use error::{Error, Result};
pub use kernels::{CovariateParams, ModelDims, OutcomeParams, PredictiveMethod, PriorSpec};
pub use sampler::{fit, ClusterState, HyperState, PosteriorDraws, SamplerConfig};
