//! D-BIRD: a dynamic Bayesian item-response model, fit by exact Gibbs sampling.
//!
//! Ability is decomposed as `θ_{i,t} = μ_t + β_{i,t}` — a cohort-level random
//! walk shared by everyone plus a per-student deviation walk with its own
//! innovation variance — and responses follow a Rasch likelihood
//! `P(correct) = logit⁻¹(θ_{i,t} - d_j)` with known item difficulties `d_j`.
//! Pólya-Gamma augmentation makes every full conditional Gaussian or
//! inverse-gamma, so the sampler is exact: no tuning, no Metropolis step.
//!
//! Module map:
//! - [`data`]: response containers, validation, model configuration
//! - [`pg`]: exact Pólya-Gamma sampler and moments
//! - [`gmrf`]: O(T) tridiagonal Cholesky for the trajectory conditionals
//! - [`gibbs`]: the blocked Gibbs sampler over `μ`, `β`, `ω`, and variances
//! - [`rasch`]: static per-assessment MAP ability estimates (no dynamics)
//! - [`sim`]: cohort simulator for recovery studies
//! - [`metrics`]: posterior summaries, recovery metrics, replication harness

pub mod data;
pub mod gibbs;
pub mod gmrf;
pub mod metrics;
pub mod pg;
pub mod rasch;
pub mod sim;
pub(crate) mod stream;

pub use data::{
    group_by_time, validate_dataset, DataError, InnovationSharing, ItemBank, ModelSpec,
    ModelVariant, Observation, ResponseDataset,
};
pub use gibbs::{
    run_chain, run_chain_with, ChainOptions, EngineError, FixedVariances, McmcConfig,
    PosteriorDraws,
};
pub use metrics::{
    replicate_study, summarize_draws, IntervalSummary, MetricsError, StudyConfig, StudyResult,
};
pub use rasch::{map_ability, AbilityFit, AssessmentSlice, RaschError};
pub use sim::{simulate_cohort, SimConfig, SimError, TrueLatents};
