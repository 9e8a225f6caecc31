//! Exact Pólya-Gamma sampling for logistic likelihoods.
//!
//! The augmentation identity
//!
//! ```text
//! exp(ψ)^y / (1 + exp(ψ)) = 2^{-1} exp(κψ) ∫ exp(-ω ψ²/2) p(ω) dω,   κ = y - 1/2
//! ```
//!
//! with `ω ~ PG(1, 0)` turns a Bernoulli-logit likelihood into a Gaussian one
//! conditional on `ω`, whose conditional law is `PG(1, ψ)`. [`draw_pg1`] draws
//! from `PG(1, c)` exactly — no truncation of the infinite series — using the
//! alternating-series accept/reject construction on the tilted Jacobi density:
//! a proposal is drawn from a two-piece mixture (truncated inverse-Gaussian
//! body, exponential tail, split at `x = 0.64`), then accepted by squeezing
//! the target density between partial sums of its alternating series. The
//! expected number of proposals per draw stays below 1.3 for every tilt.
//!
//! Branch masses are computed in log space so that very large tilts degrade
//! gracefully (the exponential-tail mass underflows to zero, which is also
//! where its true mass goes); `PG(1, c) = PG(1, -c)`, so only `|c|` matters.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use thiserror::Error;

/// Split point between the inverse-Gaussian body and the exponential tail of
/// the proposal. The classical choice 0.64 is close to optimal and both
/// pieces of the target's series representation converge fast on their side.
const TRUNC: f64 = 0.64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PgError {
    #[error("tilt parameter must be finite, got {0}")]
    NonfiniteTilt(f64),
    #[error("shape parameter must be positive and finite, got {0}")]
    NonpositiveB(f64),
}

/// Mean of `PG(b, c)`, i.e. `b/(2c) · tanh(c/2)`, continuously extended to
/// `b/4` at `c = 0`.
pub fn pg_mean(b: f64, c: f64) -> Result<f64, PgError> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(PgError::NonpositiveB(b));
    }
    if !c.is_finite() {
        return Err(PgError::NonfiniteTilt(c));
    }
    if c.abs() < 1e-4 {
        // Series around 0: tanh(c/2)/(2c) = 1/4 - c²/48 + O(c⁴); the truncation
        // error at |c| = 1e-4 is below 1e-18, far under f64 resolution.
        return Ok(b * (0.25 - c * c / 48.0));
    }
    Ok(b / (2.0 * c) * (c / 2.0).tanh())
}

/// Draws one variate from `PG(1, c)`.
pub fn draw_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> Result<f64, PgError> {
    draw_pg1_counted(c, rng).map(|(x, _)| x)
}

/// Same as [`draw_pg1`] but also reports how many proposals were consumed;
/// used to test the advertised ≤ 1.3 proposals-per-draw bound.
fn draw_pg1_counted<R: Rng + ?Sized>(c: f64, rng: &mut R) -> Result<(f64, u32), PgError> {
    if !c.is_finite() {
        return Err(PgError::NonfiniteTilt(c));
    }
    // The target is (1/4) of a tilted Jacobi variate with tilt z = |c|/2.
    let z = c.abs() / 2.0;
    let fz = std::f64::consts::PI * std::f64::consts::PI / 8.0 + z * z / 2.0;
    let p_exp = exp_branch_prob(z);
    let mut proposals = 0u32;
    loop {
        proposals += 1;
        let x = if rng.gen::<f64>() < p_exp {
            // Exponential tail: x > TRUNC with rate fz.
            let e: f64 = rng.sample(Exp1);
            TRUNC + e / fz
        } else {
            sample_truncated_inv_gauss(z, rng)
        };
        // Accept/reject by alternating partial sums: the series coefficients
        // decrease monotonically in n for every x, so consecutive partial sums
        // bracket the density and one of the two tests below fires in finite
        // time with probability one.
        let mut s = a_coef(0, x);
        let y = rng.gen::<f64>() * s;
        let mut n = 0u32;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= a_coef(n, x);
                if y <= s {
                    return Ok((0.25 * x, proposals));
                }
            } else {
                s += a_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Probability that a proposal comes from the exponential-tail branch.
///
/// With p the tail mass and q the body mass of the tilted proposal, returns
/// `p / (p + q)` evaluated via logs. For large `z` the intermediate `exp`
/// overflows to `+inf` and the ratio collapses to 0 — exactly the right limit,
/// since the tilted density concentrates near `1/z² ≪ TRUNC`.
fn exp_branch_prob(z: f64) -> f64 {
    let fz = std::f64::consts::PI * std::f64::consts::PI / 8.0 + z * z / 2.0;
    let x0 = fz.ln() + fz * TRUNC;
    let rt = TRUNC.sqrt();
    let log_b = x0 - z + log_norm_cdf((TRUNC * z - 1.0) / rt);
    let log_a = x0 + z + log_norm_cdf(-(TRUNC * z + 1.0) / rt);
    let q_div_p = 4.0 / std::f64::consts::PI * (log_b.exp() + log_a.exp());
    1.0 / (1.0 + q_div_p)
}

/// Inverse-Gaussian(mean `1/z`, shape 1) restricted to `(0, TRUNC]`.
fn sample_truncated_inv_gauss<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    if z < 1.0 / TRUNC {
        // Mean exceeds the truncation point: sample the z = 0 law restricted
        // to (0, TRUNC] via a chi-like rejection, then thin by the tilt.
        loop {
            let e1: f64 = loop {
                let e1: f64 = rng.sample(Exp1);
                let e2: f64 = rng.sample(Exp1);
                if e1 * e1 <= 2.0 * e2 / TRUNC {
                    break e1;
                }
            };
            let x = TRUNC / (1.0 + TRUNC * e1).powi(2);
            if rng.gen::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        // Mean within the truncation point: draw unconditionally (standard
        // transform method) and retry until the draw lands inside.
        let mu = 1.0 / z;
        loop {
            let n: f64 = rng.sample(StandardNormal);
            let y = n * n;
            let mut x = mu + 0.5 * mu * mu * y
                - 0.5 * mu * (4.0 * mu * y + (mu * y) * (mu * y)).sqrt();
            if rng.gen::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= TRUNC {
                return x;
            }
        }
    }
}

/// `n`-th coefficient of the alternating series for the (untilted) Jacobi
/// density, in the form valid on the side of `TRUNC` where `x` lies.
fn a_coef(n: u32, x: f64) -> f64 {
    let h = f64::from(n) + 0.5;
    let pi = std::f64::consts::PI;
    if x > TRUNC {
        pi * h * (-h * h * pi * pi * x / 2.0).exp()
    } else {
        (2.0 / (pi * x)).powf(1.5) * pi * h * (-2.0 * h * h / x).exp()
    }
}

/// `log Φ(x)` for the standard normal, stable across the entire line.
fn log_norm_cdf(x: f64) -> f64 {
    if x >= -30.0 {
        (0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)).ln()
    } else {
        // Deep tail: asymptotic expansion of Mills' ratio. At |x| = 30 the
        // truncated correction series is accurate to ~1e-12 relative.
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
    }
}
