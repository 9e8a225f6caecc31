//! Static Rasch ability estimation for a single assessment slice.
//!
//! Given one student's responses to items of known difficulty, the MAP
//! ability maximizes the Bernoulli-logit log likelihood plus a `N(0, s²)`
//! prior. The objective is strictly concave (the Hessian is bounded above by
//! `-1/s²`), so damped Newton from zero converges globally; the damping is a
//! safety net rather than a frequent participant.

use thiserror::Error;

/// Default prior standard deviation: wide enough to be near-flat over the
/// plausible ability range while still pinning slices with all-correct or
/// all-incorrect responses to a finite estimate.
pub const DEFAULT_PRIOR_SD: f64 = 5.0;

/// Full Newton steps shorter than this mean the gradient is dead zero at
/// working precision.
const STEP_TOL: f64 = 1e-10;

const MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RaschError {
    #[error("prior standard deviation must be positive and finite, got {0}")]
    InvalidPriorSd(f64),
    #[error("item {index} has non-finite difficulty")]
    NonFiniteDifficulty { index: usize },
    #[error("item {index} has response {value}, expected 0 or 1")]
    NonBinaryResponse { index: usize, value: u8 },
    #[error("Newton iteration did not converge after {iterations} steps \
             (last step {last_step:.3e})")]
    NoConvergence { iterations: usize, last_step: f64 },
}

/// One student's responses at one point in time: `(difficulty, correct)`
/// pairs plus the ability prior.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentSlice {
    items: Vec<(f64, u8)>,
    prior_sd: f64,
}

impl AssessmentSlice {
    /// Builds a slice with the default prior. Responses must be 0/1 and
    /// difficulties finite.
    pub fn new(items: Vec<(f64, u8)>) -> Result<Self, RaschError> {
        Self::with_prior_sd(items, DEFAULT_PRIOR_SD)
    }

    pub fn with_prior_sd(items: Vec<(f64, u8)>, prior_sd: f64) -> Result<Self, RaschError> {
        if !(prior_sd > 0.0 && prior_sd.is_finite()) {
            return Err(RaschError::InvalidPriorSd(prior_sd));
        }
        for (index, (difficulty, correct)) in items.iter().enumerate() {
            if !difficulty.is_finite() {
                return Err(RaschError::NonFiniteDifficulty { index });
            }
            if *correct > 1 {
                return Err(RaschError::NonBinaryResponse { index, value: *correct });
            }
        }
        Ok(Self { items, prior_sd })
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn prior_sd(&self) -> f64 {
        self.prior_sd
    }

    /// Log posterior up to a constant.
    fn log_posterior(&self, theta: f64) -> f64 {
        let mut ll = -0.5 * theta * theta / (self.prior_sd * self.prior_sd);
        for &(d, y) in &self.items {
            let x = theta - d;
            ll += f64::from(y) * x - ln_1p_exp(x);
        }
        ll
    }

    /// Gradient of the log posterior.
    pub fn gradient(&self, theta: f64) -> f64 {
        let mut g = -theta / (self.prior_sd * self.prior_sd);
        for &(d, y) in &self.items {
            g += f64::from(y) - sigmoid(theta - d);
        }
        g
    }

    /// Second derivative; always at most `-1/s²`.
    fn curvature(&self, theta: f64) -> f64 {
        let mut h = -1.0 / (self.prior_sd * self.prior_sd);
        for &(d, _) in &self.items {
            let p = sigmoid(theta - d);
            h -= p * (1.0 - p);
        }
        h
    }
}

/// MAP estimate with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbilityFit {
    pub theta: f64,
    /// Gradient at the returned estimate.
    pub gradient: f64,
    pub iterations: usize,
}

/// Damped Newton from zero with the default iteration cap.
pub fn map_ability(slice: &AssessmentSlice) -> Result<AbilityFit, RaschError> {
    map_ability_with(slice, MAX_ITER)
}

/// Damped Newton from zero. Converges when the full Newton step drops below
/// `1e-10`; each proposed step is halved until the log posterior does not
/// decrease.
pub fn map_ability_with(slice: &AssessmentSlice, max_iter: usize) -> Result<AbilityFit, RaschError> {
    let mut theta = 0.0;
    let mut value = slice.log_posterior(theta);
    let mut last_step = f64::INFINITY;
    for iterations in 0..=max_iter {
        let g = slice.gradient(theta);
        let h = slice.curvature(theta);
        let step = -g / h;
        if step.abs() < STEP_TOL {
            return Ok(AbilityFit { theta, gradient: g, iterations });
        }
        if iterations == max_iter {
            last_step = step;
            break;
        }
        let mut scale = 1.0;
        loop {
            let candidate = theta + scale * step;
            let candidate_value = slice.log_posterior(candidate);
            if candidate_value >= value {
                theta = candidate;
                value = candidate_value;
                break;
            }
            scale *= 0.5;
            if scale * step.abs() < STEP_TOL {
                // The full step is informative but no scaled version improves
                // the objective: we are at the optimum to machine precision.
                return Ok(AbilityFit { theta, gradient: g, iterations });
            }
        }
    }
    Err(RaschError::NoConvergence { iterations: max_iter, last_step })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `x`.
fn ln_1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
