//! Blocked Gibbs sampler for the dynamic item-response model.
//!
//! One sweep updates, in order:
//!
//! 1. every augmentation variable `ω ~ PG(1, θ - d)`, one per observation;
//! 2. the cohort walk `μ` from its tridiagonal Gaussian conditional (cohort
//!    variants only);
//! 3. each student's deviation walk `β_i` from its own tridiagonal
//!    conditional;
//! 4. recentering: the per-time mean deviation is moved into `μ`, which leaves
//!    every `θ_{i,t} = μ_t + β_{i,t}` bit-for-bit unchanged and pins the
//!    otherwise unidentified location split between cohort and deviations;
//! 5. innovation variances from their inverse-gamma conditionals;
//! 6. initial-state variances through the half-Cauchy auxiliary sub-steps.
//!
//! Recentering precedes the variance updates so the increments entering step 5
//! are those of the centered parametrization.
//!
//! Randomness is organized as one substream per (sweep, unit) — observation,
//! student, or variance component — so steps 1 and 3 can run on any number of
//! worker threads and still reproduce the exact same chain.

mod conditionals;
mod variance;

pub use conditionals::{build_beta_conditional, build_mu_conditional, ObsIndex};
pub use variance::{
    update_initial_variance_halfcauchy, update_initial_variance_halfcauchy_pooled,
    update_innovation_variance, DEGENERATE_SS,
};

use ndarray::parallel::prelude::*;
use ndarray::{Array2, Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, InnovationSharing, ModelSpec, ResponseDataset};
use crate::gmrf::{self, GmrfError};
use crate::pg::{self, PgError};
use crate::stream::{role, substream};

/// Any latent state beyond this magnitude aborts the chain: the logistic
/// likelihood saturates around |ψ| ≈ 40, so latents this size can only mean
/// the data or configuration is broken.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pg(#[from] PgError),
    #[error(transparent)]
    Gmrf(#[from] GmrfError),
    #[error("{operation}: {detail}")]
    VariantMismatch { operation: &'static str, detail: &'static str },
    #[error("student index {student} out of range (dataset has {n_students})")]
    StudentOutOfRange { student: usize, n_students: usize },
    #[error("sum of squared increments {sum_sq:.3e} is numerically degenerate; \
             the trajectory has collapsed")]
    DegenerateSumOfSquares { sum_sq: f64 },
    #[error("chain diverged at sweep {sweep}: |latent| reached {max_abs:.3e}")]
    ChainDiverged { sweep: usize, max_abs: f64 },
    #[error("invalid sampler configuration: {reason}")]
    InvalidConfig { reason: &'static str },
}

/// Sampler schedule. `n_burn` sweeps are discarded, then every `thin`-th
/// sweep is retained until `n_keep` draws have been collected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_burn: usize,
    pub n_keep: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { n_burn: 10_000, n_keep: 10_000, thin: 1, seed: 0 }
    }
}

/// Variance values held fixed for the whole run (no conjugate updates).
/// Used to target a fully specified posterior, e.g. when validating the
/// sampler against quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedVariances {
    pub sigma2_mu_init: f64,
    pub sigma2_dmu: f64,
    pub sigma2_beta_init: f64,
    pub sigma2_dbeta: f64,
}

/// Knobs that alter how a chain runs without changing the model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainOptions {
    /// Hold all variances at these values and skip steps 5–6.
    pub fixed_variances: Option<FixedVariances>,
    /// When a sum of squared increments degenerates (below [`DEGENERATE_SS`]),
    /// substitute this floor instead of failing. Every substitution is
    /// counted in [`PosteriorDraws::ss_floor_events`].
    pub ss_floor: Option<f64>,
}

/// Complete mutable state of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub spec: ModelSpec,
    /// Cohort walk, `None` for variants without one.
    pub mu: Option<Vec<f64>>,
    /// Deviation walks, one row per student.
    pub beta: Array2<f64>,
    /// One augmentation variable per observation, in canonical dataset order.
    pub omega: Vec<f64>,
    pub sigma2_mu_init: Option<f64>,
    pub sigma2_dmu: Option<f64>,
    /// Initial-state variances of the deviation walks: length `n_students`,
    /// or 1 when the variant shares them.
    pub sigma2_beta_init: Vec<f64>,
    /// Innovation variances of the deviation walks, same length convention.
    pub sigma2_dbeta: Vec<f64>,
    /// Half-Cauchy auxiliary for the cohort initial variance.
    pub aux_mu: Option<f64>,
    /// Half-Cauchy auxiliaries for the deviation initial variances.
    pub aux_beta: Vec<f64>,
}

impl ChainState {
    /// A fresh state: latents at zero, augmentation at its `ψ = 0` mean,
    /// every variance at 1.
    pub fn new(data: &ResponseDataset, spec: ModelSpec) -> Self {
        let n = data.n_students();
        let t_len = data.n_times();
        let slots = match spec.innovation_sharing {
            InnovationSharing::Shared => 1,
            InnovationSharing::PerStudent => n,
        };
        Self {
            spec,
            mu: spec.include_cohort.then(|| vec![0.0; t_len]),
            beta: Array2::zeros((n, t_len)),
            omega: vec![0.25; data.observations().len()],
            sigma2_mu_init: spec.include_cohort.then_some(1.0),
            sigma2_dmu: spec.include_cohort.then_some(1.0),
            sigma2_beta_init: vec![1.0; slots],
            sigma2_dbeta: vec![1.0; slots],
            aux_mu: spec.include_cohort.then_some(1.0),
            aux_beta: vec![1.0; slots],
        }
    }

    pub fn theta(&self, student: usize, time: usize) -> f64 {
        self.mu.as_ref().map_or(0.0, |m| m[time]) + self.beta[[student, time]]
    }

    fn slot(&self, student: usize) -> usize {
        if self.sigma2_beta_init.len() == 1 {
            0
        } else {
            student
        }
    }

    pub fn beta_init_variance(&self, student: usize) -> f64 {
        self.sigma2_beta_init[self.slot(student)]
    }

    pub fn beta_innovation_variance(&self, student: usize) -> f64 {
        self.sigma2_dbeta[self.slot(student)]
    }

    fn max_abs_latent(&self) -> f64 {
        let beta_max = self.beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mu_max = self
            .mu
            .as_ref()
            .map_or(0.0, |m| m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())));
        beta_max.max(mu_max)
    }
}

/// Redraws every augmentation variable from `PG(1, θ - d)` using a single
/// caller-supplied stream, in canonical observation order.
pub fn draw_omegas<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &ResponseDataset,
    rng: &mut R,
) -> Result<(), EngineError> {
    let bank = data.item_bank();
    for (o, obs) in data.observations().iter().enumerate() {
        let psi = state.theta(obs.student, obs.time) - bank.difficulty(obs.item);
        state.omega[o] = pg::draw_pg1(psi, rng)?;
    }
    Ok(())
}

/// Moves each time point's mean deviation into the cohort walk. `θ` is
/// unchanged exactly; afterwards the deviations average to zero at every `t`
/// up to floating-point roundoff.
pub fn recenter(state: &mut ChainState) -> Result<(), EngineError> {
    let Some(mu) = state.mu.as_mut() else {
        return Err(EngineError::VariantMismatch {
            operation: "recenter",
            detail: "model variant has no cohort walk",
        });
    };
    let n = state.beta.nrows();
    for (mut column, mu_t) in state.beta.columns_mut().into_iter().zip(mu.iter_mut()) {
        let mean = column.sum() / n as f64;
        column -= mean;
        *mu_t += mean;
    }
    Ok(())
}

/// Retained posterior draws plus the configuration that produced them.
///
/// Ability draws are reconstructed on demand as `θ = μ + β` (or `β` alone for
/// variants without a cohort walk).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    spec: ModelSpec,
    config: McmcConfig,
    n_students: usize,
    n_times: usize,
    mu: Option<Array2<f64>>,
    beta: Array3<f64>,
    sigma2_dmu: Option<Vec<f64>>,
    sigma2_dbeta: Array2<f64>,
    sigma2_mu_init: Option<Vec<f64>>,
    sigma2_beta_init: Array2<f64>,
    ss_floor_events: usize,
}

impl PosteriorDraws {
    fn with_capacity(data: &ResponseDataset, spec: ModelSpec, config: McmcConfig, slots: usize) -> Self {
        let (k, n, t_len) = (config.n_keep, data.n_students(), data.n_times());
        Self {
            spec,
            config,
            n_students: n,
            n_times: t_len,
            mu: spec.include_cohort.then(|| Array2::zeros((k, t_len))),
            beta: Array3::zeros((k, n, t_len)),
            sigma2_dmu: spec.include_cohort.then(|| Vec::with_capacity(k)),
            sigma2_dbeta: Array2::zeros((k, slots)),
            sigma2_mu_init: spec.include_cohort.then(|| Vec::with_capacity(k)),
            sigma2_beta_init: Array2::zeros((k, slots)),
            ss_floor_events: 0,
        }
    }

    fn record(&mut self, k: usize, state: &ChainState) {
        if let (Some(dst), Some(src)) = (self.mu.as_mut(), state.mu.as_ref()) {
            dst.row_mut(k).assign(&ndarray::ArrayView1::from(&src[..]));
        }
        self.beta.index_axis_mut(Axis(0), k).assign(&state.beta);
        if let (Some(dst), Some(src)) = (self.sigma2_dmu.as_mut(), state.sigma2_dmu) {
            dst.push(src);
        }
        if let (Some(dst), Some(src)) = (self.sigma2_mu_init.as_mut(), state.sigma2_mu_init) {
            dst.push(src);
        }
        self.sigma2_dbeta
            .row_mut(k)
            .assign(&ndarray::ArrayView1::from(&state.sigma2_dbeta[..]));
        self.sigma2_beta_init
            .row_mut(k)
            .assign(&ndarray::ArrayView1::from(&state.sigma2_beta_init[..]));
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn config(&self) -> &McmcConfig {
        &self.config
    }

    pub fn n_students(&self) -> usize {
        self.n_students
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_kept(&self) -> usize {
        self.config.n_keep
    }

    /// Cohort-walk draws, `(n_keep, T)`, when the variant has a cohort.
    pub fn mu_draws(&self) -> Option<&Array2<f64>> {
        self.mu.as_ref()
    }

    /// Deviation draws, `(n_keep, N, T)`.
    pub fn beta_draws(&self) -> &Array3<f64> {
        &self.beta
    }

    pub fn sigma2_dmu_draws(&self) -> Option<&[f64]> {
        self.sigma2_dmu.as_deref()
    }

    pub fn sigma2_mu_init_draws(&self) -> Option<&[f64]> {
        self.sigma2_mu_init.as_deref()
    }

    /// Innovation-variance draws, `(n_keep, slots)` with one slot per student
    /// or a single shared slot.
    pub fn sigma2_dbeta_draws(&self) -> &Array2<f64> {
        &self.sigma2_dbeta
    }

    pub fn sigma2_beta_init_draws(&self) -> &Array2<f64> {
        &self.sigma2_beta_init
    }

    /// How many times a degenerate sum of squares was floored instead of
    /// failing the run (always 0 unless [`ChainOptions::ss_floor`] was set).
    pub fn ss_floor_events(&self) -> usize {
        self.ss_floor_events
    }

    /// Ability draw `k` as an `(N, T)` matrix.
    pub fn theta_draw(&self, k: usize) -> Array2<f64> {
        let mut theta = self.beta.index_axis(Axis(0), k).to_owned();
        if let Some(mu) = &self.mu {
            let mu_row = mu.row(k);
            for mut student_row in theta.rows_mut() {
                student_row += &mu_row;
            }
        }
        theta
    }

    /// Posterior mean ability, `(N, T)`.
    pub fn theta_mean(&self) -> Array2<f64> {
        let k = self.n_kept();
        let mut acc = self.beta.sum_axis(Axis(0));
        if let Some(mu) = &self.mu {
            let mu_sum = mu.sum_axis(Axis(0));
            for mut student_row in acc.rows_mut() {
                student_row += &mu_sum;
            }
        }
        acc /= k as f64;
        acc
    }

    /// Copies the `n_keep` ability draws for one `(student, time)` cell into
    /// `out` (cleared first).
    pub fn fill_theta_cell(&self, student: usize, time: usize, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(self.n_kept());
        for k in 0..self.n_kept() {
            let mut v = self.beta[[k, student, time]];
            if let Some(mu) = &self.mu {
                v += mu[[k, time]];
            }
            out.push(v);
        }
    }
}

/// Runs one chain with default options.
pub fn run_chain(
    data: &ResponseDataset,
    spec: &ModelSpec,
    config: &McmcConfig,
) -> Result<PosteriorDraws, EngineError> {
    run_chain_with(data, spec, config, &ChainOptions::default())
}

/// Runs one chain. See the module docs for the sweep structure.
pub fn run_chain_with(
    data: &ResponseDataset,
    spec: &ModelSpec,
    config: &McmcConfig,
    options: &ChainOptions,
) -> Result<PosteriorDraws, EngineError> {
    data.require_dynamic()?;
    if !spec.is_consistent() {
        return Err(EngineError::VariantMismatch {
            operation: "run_chain",
            detail: "model spec fields are mutually inconsistent",
        });
    }
    if config.n_keep == 0 {
        return Err(EngineError::InvalidConfig { reason: "n_keep must be at least 1" });
    }
    if config.thin == 0 {
        return Err(EngineError::InvalidConfig { reason: "thin must be at least 1" });
    }
    if let Some(floor) = options.ss_floor {
        if floor.is_nan() || floor < DEGENERATE_SS {
            return Err(EngineError::InvalidConfig {
                reason: "ss_floor must be at least the degeneracy threshold",
            });
        }
    }

    let index = ObsIndex::new(data);
    let mut state = ChainState::new(data, *spec);
    if let Some(fixed) = options.fixed_variances {
        if spec.include_cohort {
            state.sigma2_mu_init = Some(fixed.sigma2_mu_init);
            state.sigma2_dmu = Some(fixed.sigma2_dmu);
        }
        state.sigma2_beta_init.fill(fixed.sigma2_beta_init);
        state.sigma2_dbeta.fill(fixed.sigma2_dbeta);
    }

    let slots = state.sigma2_dbeta.len();
    let mut draws = PosteriorDraws::with_capacity(data, *spec, *config, slots);
    let total_sweeps = config.n_burn + config.n_keep * config.thin;
    for sweep_no in 0..total_sweeps {
        sweep(&mut state, data, &index, config.seed, sweep_no, options, &mut draws.ss_floor_events)?;
        if sweep_no >= config.n_burn && (sweep_no - config.n_burn).is_multiple_of(config.thin) {
            let k = (sweep_no - config.n_burn) / config.thin;
            draws.record(k, &state);
        }
    }
    Ok(draws)
}

fn sweep(
    state: &mut ChainState,
    data: &ResponseDataset,
    index: &ObsIndex,
    seed: u64,
    sweep_no: usize,
    options: &ChainOptions,
    ss_floor_events: &mut usize,
) -> Result<(), EngineError> {
    let sweep_id = sweep_no as u64;
    let t_len = data.n_times();
    let bank = data.item_bank();
    let observations = data.observations();

    // Step 1: augmentation, one substream per observation.
    {
        let ChainState { mu, beta, omega, .. } = &mut *state;
        let mu_ref = mu.as_deref();
        let beta_ref = &*beta;
        omega
            .par_iter_mut()
            .enumerate()
            .with_min_len(512)
            .try_for_each(|(o, w)| -> Result<(), EngineError> {
                let obs = &observations[o];
                let cohort = mu_ref.map_or(0.0, |m| m[obs.time]);
                let psi = cohort + beta_ref[[obs.student, obs.time]] - bank.difficulty(obs.item);
                let mut rng = substream(seed, sweep_id, role::OMEGA, o as u64);
                *w = pg::draw_pg1(psi, &mut rng)?;
                Ok(())
            })?;
    }

    // Step 2: cohort walk.
    if state.spec.include_cohort {
        let (q, b) = build_mu_conditional(state, data)?;
        let mut rng = substream(seed, sweep_id, role::MU, 0);
        let mu = gmrf::sample_canonical(&q, &b, &mut rng)?;
        state.mu = Some(mu);
    }

    // Step 3: deviation walks, one substream per student.
    {
        let ChainState { mu, beta, omega, sigma2_beta_init, sigma2_dbeta, .. } = &mut *state;
        let mu_ref = mu.as_deref();
        let omega_ref = &*omega;
        let shared = sigma2_beta_init.len() == 1;
        let init_all = &*sigma2_beta_init;
        let innov_all = &*sigma2_dbeta;
        beta.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .try_for_each(|(i, mut row)| -> Result<(), EngineError> {
                let slot = if shared { 0 } else { i };
                let (q, b) = conditionals::beta_conditional_parts(
                    mu_ref,
                    omega_ref,
                    data,
                    index.for_student(i),
                    init_all[slot],
                    innov_all[slot],
                )?;
                let mut rng = substream(seed, sweep_id, role::BETA, i as u64);
                let draw = gmrf::sample_canonical(&q, &b, &mut rng)?;
                for (t, v) in draw.into_iter().enumerate() {
                    row[t] = v;
                }
                Ok(())
            })?;
    }

    // Step 4: recentering (cohort variants).
    if state.spec.include_cohort {
        recenter(state)?;
    }

    if options.fixed_variances.is_none() {
        let resolve_ss = |ss: f64, events: &mut usize| -> Result<f64, EngineError> {
            if ss >= DEGENERATE_SS {
                Ok(ss)
            } else if let Some(floor) = options.ss_floor {
                *events += 1;
                Ok(ss.max(floor))
            } else {
                Err(EngineError::DegenerateSumOfSquares { sum_sq: ss })
            }
        };

        // Step 5: innovation variances.
        if let Some(mu) = state.mu.as_ref() {
            let ss: f64 = (1..t_len).map(|t| (mu[t] - mu[t - 1]).powi(2)).sum();
            let ss = resolve_ss(ss, ss_floor_events)?;
            let mut rng = substream(seed, sweep_id, role::INNOVATION, 0);
            state.sigma2_dmu = Some(update_innovation_variance(ss, t_len - 1, &mut rng)?);
        }
        match state.spec.innovation_sharing {
            InnovationSharing::Shared => {
                let ss: f64 = state
                    .beta
                    .rows()
                    .into_iter()
                    .map(|row| (1..t_len).map(|t| (row[t] - row[t - 1]).powi(2)).sum::<f64>())
                    .sum();
                let ss = resolve_ss(ss, ss_floor_events)?;
                let count = data.n_students() * (t_len - 1);
                let mut rng = substream(seed, sweep_id, role::INNOVATION, 1);
                state.sigma2_dbeta[0] = update_innovation_variance(ss, count, &mut rng)?;
            }
            InnovationSharing::PerStudent => {
                for i in 0..data.n_students() {
                    let row = state.beta.row(i);
                    let ss: f64 = (1..t_len).map(|t| (row[t] - row[t - 1]).powi(2)).sum();
                    let ss = resolve_ss(ss, ss_floor_events)?;
                    let mut rng = substream(seed, sweep_id, role::INNOVATION, 1 + i as u64);
                    state.sigma2_dbeta[i] = update_innovation_variance(ss, t_len - 1, &mut rng)?;
                }
            }
        }

        // Step 6: initial-state variances.
        if let (Some(mu), Some(aux)) = (state.mu.as_ref(), state.aux_mu) {
            let mut rng = substream(seed, sweep_id, role::INITIAL, 0);
            let (s2, a) = update_initial_variance_halfcauchy(mu[0], aux, &mut rng);
            state.sigma2_mu_init = Some(s2);
            state.aux_mu = Some(a);
        }
        match state.spec.innovation_sharing {
            InnovationSharing::Shared => {
                let first_states: Vec<f64> = state.beta.column(0).to_vec();
                let mut rng = substream(seed, sweep_id, role::INITIAL, 1);
                let (s2, a) =
                    update_initial_variance_halfcauchy_pooled(&first_states, state.aux_beta[0], &mut rng);
                state.sigma2_beta_init[0] = s2;
                state.aux_beta[0] = a;
            }
            InnovationSharing::PerStudent => {
                for i in 0..data.n_students() {
                    let mut rng = substream(seed, sweep_id, role::INITIAL, 1 + i as u64);
                    let (s2, a) = update_initial_variance_halfcauchy(
                        state.beta[[i, 0]],
                        state.aux_beta[i],
                        &mut rng,
                    );
                    state.sigma2_beta_init[i] = s2;
                    state.aux_beta[i] = a;
                }
            }
        }
    }

    let max_abs = state.max_abs_latent();
    if max_abs.is_nan() || max_abs > DIVERGENCE_BOUND {
        return Err(EngineError::ChainDiverged { sweep: sweep_no, max_abs });
    }
    Ok(())
}
