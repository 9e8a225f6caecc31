//! Synthetic cohort generator.
//!
//! Draws a cohort trajectory and per-student deviation walks, then builds an
//! adaptive item stream: every `(student, time)` cell gets its own fresh
//! items whose difficulties are centered on that student's current ability
//! with Gaussian noise. Centering the items on the truth pins expected
//! accuracy at one half regardless of how far abilities drift, which keeps
//! every cell equally informative.
//!
//! Students split into two blocks: a *stable* block whose innovation
//! variances come from a tight gamma prior, and a *volatile* block drawing
//! from a much wider one. The contrast is what heteroskedastic models are
//! supposed to exploit.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, ItemBank, Observation, ResponseDataset};
use crate::stream::{role, substream};

/// Shape/rate parametrization (mean = shape / rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // rand_distr's Gamma takes a scale, not a rate.
        let gamma = Gamma::new(self.shape, 1.0 / self.rate)
            .expect("gamma parameters validated at config time");
        loop {
            let draw = gamma.sample(rng);
            if draw > 0.0 && draw.is_finite() {
                return draw;
            }
        }
    }

    fn is_valid(&self) -> bool {
        self.shape > 0.0 && self.shape.is_finite() && self.rate > 0.0 && self.rate.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_students: usize,
    pub n_times: usize,
    /// Fresh items per `(student, time)` cell; every item is unique.
    pub items_per_time: usize,
    pub mu_init_var: f64,
    pub mu_innov_var: f64,
    /// Students with index below the split form the stable block.
    pub group_split: usize,
    /// Prior for the deviation walks' initial-state variances.
    pub beta_init_prior: GammaParams,
    pub stable_innovation: GammaParams,
    pub volatile_innovation: GammaParams,
    /// Variance of item difficulty around the student's current ability.
    pub item_noise_var: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    /// The full-size cohort: 150 students, 100 weeks, 10 items per cell.
    fn default() -> Self {
        Self {
            n_students: 150,
            n_times: 100,
            items_per_time: 10,
            mu_init_var: 0.1,
            mu_innov_var: 0.05,
            group_split: 75,
            beta_init_prior: GammaParams::new(5.0, 10.0),
            stable_innovation: GammaParams::new(5.0, 500.0),
            volatile_innovation: GammaParams::new(5.0, 10.0),
            item_noise_var: 0.5,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// A small cohort with the same structure, sized so that repeated fits
    /// finish quickly: 40 students, 40 weeks, 5 items per cell.
    pub fn desk_scale() -> Self {
        Self {
            n_students: 40,
            n_times: 40,
            items_per_time: 5,
            group_split: 20,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.n_students == 0 {
            return Err(SimError::InvalidConfig { reason: "n_students must be at least 1" });
        }
        if self.n_times < 2 {
            return Err(SimError::InvalidConfig { reason: "n_times must be at least 2" });
        }
        if self.items_per_time == 0 {
            return Err(SimError::InvalidConfig { reason: "items_per_time must be at least 1" });
        }
        if self.group_split > self.n_students {
            return Err(SimError::InvalidConfig { reason: "group_split exceeds n_students" });
        }
        for v in [self.mu_init_var, self.mu_innov_var, self.item_noise_var] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig {
                    reason: "variances must be finite and non-negative",
                });
            }
        }
        if ![self.beta_init_prior, self.stable_innovation, self.volatile_innovation]
            .iter()
            .all(GammaParams::is_valid)
        {
            return Err(SimError::InvalidConfig {
                reason: "gamma parameters must be finite and positive",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation configuration: {reason}")]
    InvalidConfig { reason: &'static str },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Everything the generator drew, for scoring estimates against the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueLatents {
    pub mu: Vec<f64>,
    /// Deviations, centered across students at every time point.
    pub beta: Array2<f64>,
    /// Abilities `θ = μ + β`, shape `(N, T)`.
    pub theta: Array2<f64>,
    pub sigma2_beta_init: Vec<f64>,
    pub sigma2_dbeta: Vec<f64>,
}

/// Draws one cohort and its response data. Deterministic in `config.seed`.
pub fn simulate_cohort(config: &SimConfig) -> Result<(TrueLatents, ResponseDataset), SimError> {
    config.validate()?;
    let mut rng = substream(config.seed, 0, role::SIM, 0);
    let (n, t_len, k_items) = (config.n_students, config.n_times, config.items_per_time);

    let sigma2_beta_init: Vec<f64> =
        (0..n).map(|_| config.beta_init_prior.sample(&mut rng)).collect();
    let sigma2_dbeta: Vec<f64> = (0..n)
        .map(|i| {
            if i < config.group_split {
                config.stable_innovation.sample(&mut rng)
            } else {
                config.volatile_innovation.sample(&mut rng)
            }
        })
        .collect();

    let mut mu = vec![0.0; t_len];
    mu[0] = config.mu_init_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    for t in 1..t_len {
        mu[t] = mu[t - 1] + config.mu_innov_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    }

    let mut beta = Array2::zeros((n, t_len));
    for i in 0..n {
        beta[[i, 0]] = sigma2_beta_init[i].sqrt() * rng.sample::<f64, _>(StandardNormal);
        let step_sd = sigma2_dbeta[i].sqrt();
        for t in 1..t_len {
            beta[[i, t]] = beta[[i, t - 1]] + step_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    // Center the deviations so the cohort/deviation split of θ is the same
    // one the fitted models report.
    for t in 0..t_len {
        let mean = beta.column(t).sum() / n as f64;
        for i in 0..n {
            beta[[i, t]] -= mean;
        }
    }

    let mut theta = Array2::zeros((n, t_len));
    for i in 0..n {
        for t in 0..t_len {
            theta[[i, t]] = mu[t] + beta[[i, t]];
        }
    }

    let item_sd = config.item_noise_var.sqrt();
    let mut difficulties = Vec::with_capacity(n * t_len * k_items);
    let mut observations = Vec::with_capacity(n * t_len * k_items);
    for i in 0..n {
        for t in 0..t_len {
            for _ in 0..k_items {
                let item = difficulties.len();
                let d = theta[[i, t]] + item_sd * rng.sample::<f64, _>(StandardNormal);
                difficulties.push(d);
                let p = logistic(theta[[i, t]] - d);
                let y = u8::from(rng.gen::<f64>() < p);
                observations.push(Observation::new(i, t, item, y));
            }
        }
    }

    let dataset = ResponseDataset::new(n, t_len, observations, ItemBank::new(difficulties)?)?;
    let latents = TrueLatents { mu, beta, theta, sigma2_beta_init, sigma2_dbeta };
    Ok((latents, dataset))
}

/// Average success probability implied by the true abilities — the accuracy
/// an infinitely large replicate of this item stream would produce.
pub fn expected_accuracy(latents: &TrueLatents, data: &ResponseDataset) -> f64 {
    let bank = data.item_bank();
    let total: f64 = data
        .observations()
        .iter()
        .map(|obs| logistic(latents.theta[[obs.student, obs.time]] - bank.difficulty(obs.item)))
        .sum();
    total / data.observations().len() as f64
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
