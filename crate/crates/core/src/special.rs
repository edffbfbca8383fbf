//! Scalar special functions: stable log-sum-exp, the standard normal
//! pdf/cdf and their logs, the truncated-normal mean, digamma and log-beta.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{usage, Error, Result};

/// `0.5 * ln(2π)`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below `-TAIL_SWITCH` the Mills ratio is evaluated by continued fraction.
const TAIL_SWITCH: f64 = 3.0;

/// Depth of the continued fraction; ample for `t ≥ 3` at double precision.
const TAIL_DEPTH: usize = 100;

/// `log Σ exp(vᵢ)`, shifted by the maximum so that no term overflows.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(usage("log_sum_exp of an empty slice"));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if max == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal cdf through the complementary error function, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `log Φ(x)`, accurate far into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > 5.0 {
        // Φ(x) = 1 - Φ(-x); ln_1p keeps the tiny complement.
        return (-norm_cdf(-x)).ln_1p();
    }
    if x >= -TAIL_SWITCH {
        return norm_cdf(x).ln();
    }
    // Φ(x) = φ(x) / λ(x) with λ the inverse Mills ratio.
    -0.5 * x * x - LN_SQRT_2PI - inverse_mills(x).ln()
}

/// `λ(−t) − t` for `t ≥ 3`, i.e. `1/(t + 2/(t + 3/(t + …)))`.
///
/// This is the continued fraction of the normal tail ratio with its leading `t`
/// removed, so the truncated-normal mean is obtained without cancellation.
fn tail_shift(t: f64) -> f64 {
    let mut k = t;
    for j in (2..=TAIL_DEPTH).rev() {
        k = t + j as f64 / k;
    }
    1.0 / k
}

/// Inverse Mills ratio `φ(x)/Φ(x)`.
pub fn inverse_mills(x: f64) -> f64 {
    if x < -TAIL_SWITCH {
        -x + tail_shift(-x)
    } else {
        norm_pdf(x) / norm_cdf(x)
    }
}

/// Which side of zero a truncated Gaussian lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    /// The side selected by a binary response: 1 → positive, 0 → negative.
    pub fn from_response(y: u8) -> Self {
        if y == 0 {
            Side::Negative
        } else {
            Side::Positive
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Side::Positive => 1.0,
            Side::Negative => -1.0,
        }
    }
}

/// Mean of `N(location, 1)` truncated to the given side of zero.
///
/// Positive side: `ℓ + φ(ℓ)/Φ(ℓ)`. Negative side: `ℓ + φ(ℓ)/(Φ(ℓ) − 1)`, evaluated as
/// `−m₊(−ℓ)` by symmetry. Deep in the excluded tail the Mills ratio comes from its
/// continued fraction, written so that `ℓ + λ(ℓ)` never cancels.
pub fn truncated_normal_mean(location: f64, side: Side) -> f64 {
    match side {
        Side::Positive => positive_truncated_mean(location),
        Side::Negative => -positive_truncated_mean(-location),
    }
}

fn positive_truncated_mean(l: f64) -> f64 {
    if l < -TAIL_SWITCH {
        tail_shift(-l)
    } else {
        l + inverse_mills(l)
    }
}

/// Variance of `N(location, 1)` truncated to the given side: `1 − λ(λ + ℓ)` on the positive side.
pub fn truncated_normal_variance(location: f64, side: Side) -> f64 {
    let l = side.sign() * location;
    let mean_shift = positive_truncated_mean(l) - l;
    (1.0 - mean_shift * (mean_shift + l)).max(0.0)
}

/// `log P(side)` for a unit-variance Gaussian at `location`: `log Φ(ℓ)` or `log Φ(−ℓ)`.
pub fn log_side_probability(location: f64, side: Side) -> f64 {
    log_norm_cdf(side.sign() * location)
}

/// Digamma `ψ(x) = d/dx log Γ(x)` for `x > 0`.
///
/// Shifts the argument up to `x ≥ 6` with `ψ(x) = ψ(x+1) − 1/x`, then applies the
/// asymptotic Bernoulli series.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli coefficients B_{2k}/(2k) for k = 1..7.
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 * inv - series
}

/// `log Γ(x)`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `log B(a, b) = log Γ(a) + log Γ(b) − log Γ(a+b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `x log x` with the continuous extension `0 log 0 = 0`.
pub fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Normalizes log-weights into probabilities, in log space.
pub fn softmax_in_place(log_weights: &mut [f64]) -> Result<()> {
    let lse = log_sum_exp(log_weights)?;
    if !lse.is_finite() {
        return Err(Error::Numeric("softmax of non-finite log-weights".into()));
    }
    for w in log_weights.iter_mut() {
        *w = (*w - lse).exp();
    }
    Ok(())
}

/// `log N(x | mean, variance)` for a scalar Gaussian.
pub fn ln_normal_density(x: f64, mean: f64, variance: f64) -> f64 {
    let r = x - mean;
    -0.5 * (2.0 * PI * variance).ln() - 0.5 * r * r / variance
}
