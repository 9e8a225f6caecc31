//! Conjugate variance updates.
//!
//! Innovation variances carry the scale-invariant prior `p(σ²) ∝ 1/σ²`, so
//! given `n` random-walk increments with sum of squares `SS` the conditional
//! is `InverseGamma(n/2, SS/2)`.
//!
//! Initial-state variances carry a half-Cauchy prior with unit scale,
//! expressed through the auxiliary-mixture identity
//! `σ² | a ~ InverseGamma(1/2, 1/a)`, `a ~ InverseGamma(1/2, 1)`:
//! both sub-steps are then inverse-gamma draws and the σ marginal is exactly
//! `C⁺(0, 1)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::EngineError;

/// Sum-of-squares threshold below which an innovation update refuses to
/// sample: a conjugate draw from `InverseGamma(n/2, ~0)` would collapse the
/// variance to numerical zero and freeze the trajectory. Callers that prefer
/// resilience over failure floor the sum of squares instead (see
/// [`crate::gibbs::ChainOptions::ss_floor`]).
pub const DEGENERATE_SS: f64 = 1e-12;

/// Draws `σ² | increments ~ InverseGamma(count/2, sum_sq/2)`.
pub fn update_innovation_variance<R: Rng + ?Sized>(
    sum_sq: f64,
    count: usize,
    rng: &mut R,
) -> Result<f64, EngineError> {
    if sum_sq.is_nan() || sum_sq < DEGENERATE_SS || count == 0 {
        return Err(EngineError::DegenerateSumOfSquares { sum_sq });
    }
    Ok(draw_inverse_gamma(count as f64 / 2.0, sum_sq / 2.0, rng))
}

/// One Gibbs sub-step of the half-Cauchy hierarchy for an initial-state
/// variance observed through a single first state `x ~ N(0, σ²)`:
/// draw `σ² | a, x ~ InverseGamma(1, 1/a + x²/2)`, then refresh the auxiliary
/// `a | σ² ~ InverseGamma(1, 1 + 1/σ²)`. Returns the new `(σ², a)` pair.
pub fn update_initial_variance_halfcauchy<R: Rng + ?Sized>(
    x: f64,
    a: f64,
    rng: &mut R,
) -> (f64, f64) {
    let sigma2 = draw_inverse_gamma(1.0, 1.0 / a + x * x / 2.0, rng);
    let a_new = draw_inverse_gamma(1.0, 1.0 + 1.0 / sigma2, rng);
    (sigma2, a_new)
}

/// Pooled form of [`update_initial_variance_halfcauchy`] for a variance shared
/// by several first states: `σ² | a, x ~ InverseGamma((1 + n)/2, 1/a + Σx²/2)`.
/// With a single state this coincides with the unpooled update.
pub fn update_initial_variance_halfcauchy_pooled<R: Rng + ?Sized>(
    xs: &[f64],
    a: f64,
    rng: &mut R,
) -> (f64, f64) {
    let sum_sq: f64 = xs.iter().map(|x| x * x).sum();
    let shape = (1.0 + xs.len() as f64) / 2.0;
    let sigma2 = draw_inverse_gamma(shape, 1.0 / a + sum_sq / 2.0, rng);
    let a_new = draw_inverse_gamma(1.0, 1.0 + 1.0 / sigma2, rng);
    (sigma2, a_new)
}

/// An `InverseGamma(shape, rate)` draw via the reciprocal of a gamma variate.
///
/// The rejection loop discards the measure-zero underflow/overflow draws a
/// plain reciprocal could produce, keeping every returned variance strictly
/// positive and finite.
fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let gamma = Gamma::new(shape, 1.0 / rate).expect("inverse-gamma parameters must be positive");
    loop {
        let y = gamma.sample(rng);
        if y > 0.0 && y.is_finite() {
            let x = 1.0 / y;
            if x > 0.0 && x.is_finite() {
                return x;
            }
        }
    }
}
