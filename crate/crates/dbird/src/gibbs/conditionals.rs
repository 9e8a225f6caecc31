//! Gaussian full conditionals of the latent trajectories.
//!
//! Conditional on the augmentation variables `ω`, both the cohort walk `μ` and
//! each deviation walk `β_i` are Gaussian with tridiagonal precision: the
//! random-walk prior contributes the band, each observation adds `ω` to the
//! diagonal of its time point, and the canonical mean vector collects
//! `κ + ω·(d_j - other component)` — the other component being `β_{i,t}` when
//! updating `μ` and `μ_t` when updating `β_i`. The two builders are exact
//! mirrors of one another through the symmetry of `θ = μ + β`.

use crate::data::{Observation, ResponseDataset};
use crate::gmrf::SymTridiagonal;

use super::{ChainState, EngineError};

/// Observation positions grouped by student, each list in time order.
///
/// The canonical dataset order interleaves students within a time point, so a
/// deviation update would otherwise scan the whole dataset; this index is
/// built once per fit and makes each student's update proportional to their
/// own observation count.
#[derive(Debug, Clone)]
pub struct ObsIndex {
    per_student: Vec<Vec<u32>>,
}

impl ObsIndex {
    pub fn new(data: &ResponseDataset) -> Self {
        let mut per_student = vec![Vec::new(); data.n_students()];
        for (o, obs) in data.observations().iter().enumerate() {
            per_student[obs.student].push(o as u32);
        }
        Self { per_student }
    }

    pub fn for_student(&self, student: usize) -> &[u32] {
        &self.per_student[student]
    }
}

/// Adds the random-walk prior (initial state variance `init_var`, innovation
/// variance `innov_var`) to precision bands of length `T` and `T - 1`.
fn add_walk_prior(diag: &mut [f64], offdiag: &mut [f64], init_var: f64, innov_var: f64) {
    let t_len = diag.len();
    let innov_prec = 1.0 / innov_var;
    diag[0] += 1.0 / init_var + innov_prec;
    diag[t_len - 1] += innov_prec;
    for d in &mut diag[1..t_len - 1] {
        *d += 2.0 * innov_prec;
    }
    for e in offdiag.iter_mut() {
        *e = -innov_prec;
    }
}

/// Full conditional of the cohort walk given everything else, as a canonical
/// pair `(Q, b)` with conditional law `N(Q⁻¹ b, Q⁻¹)`.
pub fn build_mu_conditional(
    state: &ChainState,
    data: &ResponseDataset,
) -> Result<(SymTridiagonal, Vec<f64>), EngineError> {
    let Some(_) = state.mu.as_ref() else {
        return Err(EngineError::VariantMismatch {
            operation: "build_mu_conditional",
            detail: "model variant has no cohort walk",
        });
    };
    let t_len = data.n_times();
    let mut diag = vec![0.0; t_len];
    let mut offdiag = vec![0.0; t_len - 1];
    let mut b = vec![0.0; t_len];
    add_walk_prior(
        &mut diag,
        &mut offdiag,
        state.sigma2_mu_init.expect("cohort state carries its initial variance"),
        state.sigma2_dmu.expect("cohort state carries its innovation variance"),
    );
    let bank = data.item_bank();
    for (o, obs) in data.observations().iter().enumerate() {
        let w = state.omega[o];
        diag[obs.time] += w;
        b[obs.time] += obs.kappa() + w * (bank.difficulty(obs.item) - state.beta[[obs.student, obs.time]]);
    }
    Ok((SymTridiagonal::new(diag, offdiag)?, b))
}

/// Full conditional of one student's deviation walk, canonical pair `(Q, b)`.
pub fn build_beta_conditional(
    state: &ChainState,
    data: &ResponseDataset,
    index: &ObsIndex,
    student: usize,
) -> Result<(SymTridiagonal, Vec<f64>), EngineError> {
    if student >= data.n_students() {
        return Err(EngineError::StudentOutOfRange {
            student,
            n_students: data.n_students(),
        });
    }
    beta_conditional_parts(
        state.mu.as_deref(),
        &state.omega,
        data,
        index.for_student(student),
        state.beta_init_variance(student),
        state.beta_innovation_variance(student),
    )
}

/// Shared core of the deviation conditional, written against plain slices so
/// the sampler can call it on disjoint students in parallel.
pub(super) fn beta_conditional_parts(
    mu: Option<&[f64]>,
    omega: &[f64],
    data: &ResponseDataset,
    obs_positions: &[u32],
    init_var: f64,
    innov_var: f64,
) -> Result<(SymTridiagonal, Vec<f64>), EngineError> {
    let t_len = data.n_times();
    let mut diag = vec![0.0; t_len];
    let mut offdiag = vec![0.0; t_len - 1];
    let mut b = vec![0.0; t_len];
    add_walk_prior(&mut diag, &mut offdiag, init_var, innov_var);
    let bank = data.item_bank();
    let all = data.observations();
    for &o in obs_positions {
        let obs: &Observation = &all[o as usize];
        let w = omega[o as usize];
        let cohort = mu.map_or(0.0, |m| m[obs.time]);
        diag[obs.time] += w;
        b[obs.time] += obs.kappa() + w * (bank.difficulty(obs.item) - cohort);
    }
    Ok((SymTridiagonal::new(diag, offdiag)?, b))
}
