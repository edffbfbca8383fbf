//! Variational factor families and the product state built from them.
//!
//! Every family here is exponential, so the damped update
//! `q ∝ [q*]^γ [q]^{1−γ}` is a convex combination of natural parameters; see
//! [`Factor::geometric_mix`].

use std::f64::consts::{E, PI};

use crate::error::{numeric, usage, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::special::{
    digamma_unchecked, ln_beta, ln_gamma, log_side_probability, truncated_normal_mean, truncated_normal_variance, Side,
};

/// Smallest probability used inside logarithms of categorical weights.
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFactor {
    mean: f64,
    variance: f64,
}

impl GaussianFactor {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
            return Err(numeric(format!("invalid Gaussian factor N({mean}, {variance})")));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `E[x²]`.
    pub fn second_moment(&self) -> f64 {
        self.mean * self.mean + self.variance
    }

    pub fn entropy(&self) -> f64 {
        0.5 * (2.0 * PI * E * self.variance).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateGaussianFactor {
    mean: Vector,
    covariance: Matrix,
}

impl MultivariateGaussianFactor {
    pub fn new(mean: Vector, covariance: Matrix) -> Result<Self> {
        if covariance.nrows() != mean.len() || !covariance.is_square() {
            return Err(usage(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if !linalg::is_symmetric(&covariance, 1e-10) {
            return Err(numeric("covariance is not symmetric"));
        }
        linalg::cholesky(&covariance)?;
        Ok(Self { mean, covariance: linalg::symmetrize(&covariance) })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn entropy(&self) -> f64 {
        let d = self.dim() as f64;
        // covariance was validated PD at construction
        let log_det = linalg::log_det_spd(&self.covariance).unwrap_or(f64::NAN);
        0.5 * (d * (2.0 * PI * E).ln() + log_det)
    }
}

/// Inverse-gamma with shape `A` and rate `B`: density ∝ x^{−A−1} e^{−B/x}.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseGammaFactor {
    shape: f64,
    rate: f64,
}

impl InverseGammaFactor {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
            return Err(numeric(format!("invalid inverse-gamma factor IG({shape}, {rate})")));
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `E[1/x] = A/B`.
    pub fn mean_inverse(&self) -> f64 {
        self.shape / self.rate
    }

    /// `E[log x] = log B − ψ(A)`.
    pub fn mean_log(&self) -> f64 {
        self.rate.ln() - digamma_unchecked(self.shape)
    }

    pub fn entropy(&self) -> f64 {
        self.shape + self.rate.ln() + ln_gamma(self.shape) - (1.0 + self.shape) * digamma_unchecked(self.shape)
    }

    /// `log IG(x | A, B)`.
    pub fn ln_density(&self, x: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) - (self.shape + 1.0) * x.ln() - self.rate / x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalFactor {
    probabilities: Vec<f64>,
}

impl CategoricalFactor {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(usage("categorical factor needs at least one category"));
        }
        if probabilities.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(numeric(format!("invalid categorical probabilities {probabilities:?}")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(numeric(format!("categorical probabilities sum to {total}")));
        }
        Ok(Self { probabilities })
    }

    /// Builds the factor from unnormalized log-weights, normalizing in log space.
    pub fn from_log_weights(mut log_weights: Vec<f64>) -> Result<Self> {
        crate::special::softmax_in_place(&mut log_weights)?;
        Self::renormalized(log_weights)
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(usage("categorical factor needs at least one category"));
        }
        Ok(Self { probabilities: vec![1.0 / k as f64; k] })
    }

    // Rescales away rounding drift so the sum-to-one invariant holds to 1e-12.
    fn renormalized(mut p: Vec<f64>) -> Result<Self> {
        let total: f64 = p.iter().sum();
        if !(total > 0.0) {
            return Err(numeric("categorical weights sum to zero"));
        }
        p.iter_mut().for_each(|x| *x /= total);
        Self::new(p)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        -self.probabilities.iter().map(|&p| crate::special::xlogx(p)).sum::<f64>()
    }

    /// `log p_k` with the probability clamped at [`PROB_FLOOR`].
    pub fn ln_prob(&self, k: usize) -> f64 {
        self.probabilities[k].max(PROB_FLOOR).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaFactor {
    alpha: f64,
    beta: f64,
}

impl BetaFactor {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(numeric(format!("invalid beta factor Beta({alpha}, {beta})")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// `E[log B] = ψ(α) − ψ(α+β)`.
    pub fn mean_log(&self) -> f64 {
        digamma_unchecked(self.alpha) - digamma_unchecked(self.alpha + self.beta)
    }

    /// `E[log(1−B)] = ψ(β) − ψ(α+β)`.
    pub fn mean_log_complement(&self) -> f64 {
        digamma_unchecked(self.beta) - digamma_unchecked(self.alpha + self.beta)
    }

    pub fn entropy(&self) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        ln_beta(a, b) - (a - 1.0) * digamma_unchecked(a) - (b - 1.0) * digamma_unchecked(b)
            + (a + b - 2.0) * digamma_unchecked(a + b)
    }
}

/// Unit-variance Gaussian truncated to one side of zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGaussianFactor {
    location: f64,
    side: Side,
}

impl TruncatedGaussianFactor {
    pub fn new(location: f64, side: Side) -> Result<Self> {
        if !location.is_finite() {
            return Err(numeric(format!("non-finite truncated Gaussian location {location}")));
        }
        Ok(Self { location, side })
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn scale(&self) -> f64 {
        1.0
    }

    pub fn mean(&self) -> f64 {
        truncated_normal_mean(self.location, self.side)
    }

    pub fn variance(&self) -> f64 {
        truncated_normal_variance(self.location, self.side)
    }

    /// `log P(side)` under the untruncated `N(location, 1)`.
    pub fn ln_normalizer(&self) -> f64 {
        log_side_probability(self.location, self.side)
    }

    /// `½ log(2πe) + log Z − ½ ℓ' λ(ℓ')` with `ℓ'` the location reflected onto the positive side.
    pub fn entropy(&self) -> f64 {
        let l = self.side.sign() * self.location;
        let shift = self.side.sign() * (self.mean() - self.location);
        0.5 * (2.0 * PI * E).ln() + self.ln_normalizer() - 0.5 * l * shift
    }
}

/// One factor of a mean-field product.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Gaussian(GaussianFactor),
    MultivariateGaussian(MultivariateGaussianFactor),
    InverseGamma(InverseGammaFactor),
    Categorical(CategoricalFactor),
    Beta(BetaFactor),
    TruncatedGaussian(TruncatedGaussianFactor),
}

macro_rules! factor_accessor {
    ($name:ident, $variant:ident, $ty:ty) => {
        pub fn $name(&self) -> Result<&$ty> {
            match self {
                Factor::$variant(f) => Ok(f),
                other => {
                    Err(usage(format!(concat!("expected a ", stringify!($variant), " factor, found {}"), other.kind())))
                }
            }
        }
    };
}

impl Factor {
    factor_accessor!(as_gaussian, Gaussian, GaussianFactor);
    factor_accessor!(as_multivariate_gaussian, MultivariateGaussian, MultivariateGaussianFactor);
    factor_accessor!(as_inverse_gamma, InverseGamma, InverseGammaFactor);
    factor_accessor!(as_categorical, Categorical, CategoricalFactor);
    factor_accessor!(as_beta, Beta, BetaFactor);
    factor_accessor!(as_truncated_gaussian, TruncatedGaussian, TruncatedGaussianFactor);

    pub fn kind(&self) -> &'static str {
        match self {
            Factor::Gaussian(_) => "Gaussian",
            Factor::MultivariateGaussian(_) => "MultivariateGaussian",
            Factor::InverseGamma(_) => "InverseGamma",
            Factor::Categorical(_) => "Categorical",
            Factor::Beta(_) => "Beta",
            Factor::TruncatedGaussian(_) => "TruncatedGaussian",
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            Factor::Gaussian(f) => f.entropy(),
            Factor::MultivariateGaussian(f) => f.entropy(),
            Factor::InverseGamma(f) => f.entropy(),
            Factor::Categorical(f) => f.entropy(),
            Factor::Beta(f) => f.entropy(),
            Factor::TruncatedGaussian(f) => f.entropy(),
        }
    }

    /// The normalized density `∝ target^γ · self^{1−γ}`.
    ///
    /// `γ = 1` returns `target` unchanged; the two factors must be of the same family.
    pub fn geometric_mix(&self, target: &Factor, gamma: f64) -> Result<Factor> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(usage(format!("step size must lie in (0, 1], got {gamma}")));
        }
        if gamma == 1.0 {
            return Ok(target.clone());
        }
        let w = 1.0 - gamma;
        let mixed = match (self, target) {
            (Factor::Gaussian(cur), Factor::Gaussian(new)) => {
                let precision = w / cur.variance + gamma / new.variance;
                let shift = w * cur.mean / cur.variance + gamma * new.mean / new.variance;
                Factor::Gaussian(GaussianFactor::new(shift / precision, 1.0 / precision)?)
            }
            (Factor::MultivariateGaussian(cur), Factor::MultivariateGaussian(new)) => {
                let p_cur = linalg::inverse_spd(&cur.covariance)?;
                let p_new = linalg::inverse_spd(&new.covariance)?;
                let precision = &p_cur * w + &p_new * gamma;
                let shift = &p_cur * &cur.mean * w + &p_new * &new.mean * gamma;
                let covariance = linalg::inverse_spd(&precision)?;
                let mean = &covariance * shift;
                Factor::MultivariateGaussian(MultivariateGaussianFactor::new(mean, covariance)?)
            }
            (Factor::InverseGamma(cur), Factor::InverseGamma(new)) => Factor::InverseGamma(InverseGammaFactor::new(
                w * cur.shape + gamma * new.shape,
                w * cur.rate + gamma * new.rate,
            )?),
            (Factor::Categorical(cur), Factor::Categorical(new)) => {
                if cur.len() != new.len() {
                    return Err(usage("categorical factors differ in length"));
                }
                let logits = (0..cur.len()).map(|k| w * cur.ln_prob(k) + gamma * new.ln_prob(k)).collect();
                Factor::Categorical(CategoricalFactor::from_log_weights(logits)?)
            }
            (Factor::Beta(cur), Factor::Beta(new)) => {
                Factor::Beta(BetaFactor::new(w * cur.alpha + gamma * new.alpha, w * cur.beta + gamma * new.beta)?)
            }
            (Factor::TruncatedGaussian(cur), Factor::TruncatedGaussian(new)) => {
                if cur.side != new.side {
                    return Err(usage("truncated Gaussian factors live on different sides"));
                }
                Factor::TruncatedGaussian(TruncatedGaussianFactor::new(
                    w * cur.location + gamma * new.location,
                    cur.side,
                )?)
            }
            (a, b) => return Err(Error::Usage(format!("cannot mix a {} factor with a {}", a.kind(), b.kind()))),
        };
        Ok(mixed)
    }
}

/// A product distribution `q = ∏ q_θj · ∏ q_Si` over parameter blocks and latent variables.
///
/// The number, order and family of factors are fixed for the life of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub parameter_factors: Vec<Factor>,
    pub latent_factors: Vec<Factor>,
}

impl MeanFieldState {
    pub fn new(parameter_factors: Vec<Factor>, latent_factors: Vec<Factor>) -> Self {
        Self { parameter_factors, latent_factors }
    }

    pub fn parameter(&self, j: usize) -> &Factor {
        &self.parameter_factors[j]
    }

    pub fn latent(&self, i: usize) -> &Factor {
        &self.latent_factors[i]
    }

    pub fn entropy(&self) -> f64 {
        self.parameter_factors.iter().chain(&self.latent_factors).map(Factor::entropy).sum()
    }

    /// True when both states have the same factor count and families in the same order.
    pub fn same_layout(&self, other: &MeanFieldState) -> bool {
        fn kinds(v: &[Factor]) -> Vec<&'static str> {
            v.iter().map(Factor::kind).collect()
        }
        kinds(&self.parameter_factors) == kinds(&other.parameter_factors)
            && kinds(&self.latent_factors) == kinds(&other.latent_factors)
    }
}

/// Closed-form `KL(q ‖ p)` between multivariate Gaussians.
pub fn kl_gaussian(q: &MultivariateGaussianFactor, p: &MultivariateGaussianFactor) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(usage(format!("dimension mismatch: {} vs {}", q.dim(), p.dim())));
    }
    let d = q.dim() as f64;
    let p_chol = linalg::cholesky(&p.covariance)?;
    let log_det_p = 2.0 * p_chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let log_det_q = linalg::log_det_spd(&q.covariance)?;
    let trace = p_chol.solve(&q.covariance).trace();
    let diff = &p.mean - &q.mean;
    let mahalanobis = diff.dot(&p_chol.solve(&diff));
    Ok((0.5 * (trace + mahalanobis - d + log_det_p - log_det_q)).max(0.0))
}

/// KL between scalar Gaussians, `KL(N(m_q, v_q) ‖ N(m_p, v_p))`.
pub fn kl_gaussian_scalar(q: &GaussianFactor, p: &GaussianFactor) -> f64 {
    let r = q.mean - p.mean;
    0.5 * (q.variance / p.variance + r * r / p.variance - 1.0 + (p.variance / q.variance).ln())
}

/// `KL(q ‖ p)` for two factors of the same family.
pub fn factor_kl(q: &Factor, p: &Factor) -> Result<f64> {
    let kl = match (q, p) {
        (Factor::Gaussian(a), Factor::Gaussian(b)) => kl_gaussian_scalar(a, b),
        (Factor::MultivariateGaussian(a), Factor::MultivariateGaussian(b)) => kl_gaussian(a, b)?,
        (Factor::InverseGamma(a), Factor::InverseGamma(b)) => {
            // same as the Gamma KL on 1/x with rates
            (a.shape - b.shape) * digamma_unchecked(a.shape) - ln_gamma(a.shape)
                + ln_gamma(b.shape)
                + b.shape * (a.rate.ln() - b.rate.ln())
                + a.shape * (b.rate - a.rate) / a.rate
        }
        (Factor::Categorical(a), Factor::Categorical(b)) => {
            if a.len() != b.len() {
                return Err(usage("categorical factors differ in length"));
            }
            a.probabilities
                .iter()
                .enumerate()
                .filter(|(_, &pa)| pa > 0.0)
                .map(|(k, &pa)| pa * (pa.ln() - b.ln_prob(k)))
                .sum()
        }
        (Factor::Beta(a), Factor::Beta(b)) => {
            ln_beta(b.alpha, b.beta) - ln_beta(a.alpha, a.beta)
                + (a.alpha - b.alpha) * digamma_unchecked(a.alpha)
                + (a.beta - b.beta) * digamma_unchecked(a.beta)
                + (b.alpha - a.alpha + b.beta - a.beta) * digamma_unchecked(a.alpha + a.beta)
        }
        (Factor::TruncatedGaussian(a), Factor::TruncatedGaussian(b)) => {
            if a.side != b.side {
                return Err(usage("truncated Gaussian factors live on different sides"));
            }
            let offset = a.mean() - b.location;
            let cross = 0.5 * (2.0 * PI).ln() + 0.5 * (a.variance() + offset * offset) + b.ln_normalizer();
            cross - a.entropy()
        }
        (a, b) => return Err(Error::Usage(format!("no KL between {} and {}", a.kind(), b.kind()))),
    };
    Ok(kl.max(0.0))
}

/// `KL(q ‖ p)` between two product states with the same layout.
pub fn state_kl(q: &MeanFieldState, p: &MeanFieldState) -> Result<f64> {
    if !q.same_layout(p) {
        return Err(usage("states have different factor layouts"));
    }
    q.parameter_factors
        .iter()
        .zip(&p.parameter_factors)
        .chain(q.latent_factors.iter().zip(&p.latent_factors))
        .map(|(a, b)| factor_kl(a, b))
        .sum()
}
