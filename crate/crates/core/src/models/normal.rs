//! Location-scale normal model `Xᵢ ~ N(μ, σ²)` with `μ ~ N(μ₀, σ₀²)` and
//! `σ² ~ IG(a, b)`, approximated by `q(μ) q(σ²) = N(m, s²) · IG(A, B)`.
//!
//! The shape `A = a + n/2` never changes; CAVI moves `(m, s²)` and `B`.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use super::{EvidenceModel, FisherBundle, FisherSource, MleFit};
use crate::engine::{step_sequential, ModelSpec};
use crate::error::{numeric, usage, Error, Result};
use crate::factors::{Factor, GaussianFactor, InverseGammaFactor, MeanFieldState};
use crate::linalg::{Matrix, Vector};
use crate::special::{ln_gamma, ln_normal_density};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPrior {
    pub mu0: f64,
    pub sigma0_sq: f64,
    pub a: f64,
    pub b: f64,
}

impl NormalPrior {
    pub fn new(mu0: f64, sigma0_sq: f64, a: f64, b: f64) -> Result<Self> {
        if !mu0.is_finite() || !(sigma0_sq > 0.0) || !(a > 0.0) || !(b > 0.0) {
            return Err(usage(format!(
                "normal prior needs finite μ₀ and σ₀², a, b > 0; got ({mu0}, {sigma0_sq}, {a}, {b})"
            )));
        }
        Ok(Self { mu0, sigma0_sq, a, b })
    }

    /// `log π(μ, σ²)` under `N(μ₀, σ₀²) × IG(a, b)`.
    pub fn log_density(&self, mu: f64, sigma_sq: f64) -> f64 {
        if !(sigma_sq > 0.0) {
            return f64::NEG_INFINITY;
        }
        ln_normal_density(mu, self.mu0, self.sigma0_sq)
            + InverseGammaFactor::new(self.a, self.b).map(|f| f.ln_density(sigma_sq)).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct NormalModel {
    data: Vec<f64>,
    prior: NormalPrior,
    sum: f64,
}

impl NormalModel {
    pub fn new(data: Vec<f64>, prior: NormalPrior) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(usage("normal model data must be finite"));
        }
        let sum = data.iter().sum();
        Ok(Self { data, prior, sum })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn prior(&self) -> &NormalPrior {
        &self.prior
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    /// Fixed shape `A = a + n/2` of the variance factor.
    pub fn shape(&self) -> f64 {
        self.prior.a + 0.5 * self.n() as f64
    }

    /// `q(μ) = N(μ₀, σ₀²)`, `q(σ²) = IG(a + n/2, b)`.
    pub fn prior_state(&self) -> Result<MeanFieldState> {
        Ok(MeanFieldState::new(
            vec![
                Factor::Gaussian(GaussianFactor::new(self.prior.mu0, self.prior.sigma0_sq)?),
                Factor::InverseGamma(InverseGammaFactor::new(self.shape(), self.prior.b)?),
            ],
            Vec::new(),
        ))
    }

    /// Builds a state from the raw variational parameters `(m, s², B)`.
    pub fn state(&self, m: f64, s_sq: f64, rate: f64) -> Result<MeanFieldState> {
        Ok(MeanFieldState::new(
            vec![
                Factor::Gaussian(GaussianFactor::new(m, s_sq)?),
                Factor::InverseGamma(InverseGammaFactor::new(self.shape(), rate)?),
            ],
            Vec::new(),
        ))
    }

    /// `(m, s², B)` of a state.
    pub fn unpack(&self, state: &MeanFieldState) -> Result<(f64, f64, f64)> {
        let mu = state.parameter(0).as_gaussian()?;
        let ig = state.parameter(1).as_inverse_gamma()?;
        Ok((mu.mean(), mu.variance(), ig.rate()))
    }

    /// One sequential pass in the order `s²`, `m`, then `B`.
    pub fn normal_update(&self, state: &MeanFieldState) -> Result<MeanFieldState> {
        let state = step_sequential(self, state, 0, 1.0)?;
        step_sequential(self, &state, 1, 1.0)
    }

    /// `‖X − m1‖² + n s²`, the expected residual sum of squares.
    fn expected_rss(&self, m: f64, s_sq: f64) -> f64 {
        self.data.iter().map(|x| (x - m) * (x - m)).sum::<f64>() + self.n() as f64 * s_sq
    }

    /// The optimal-ELBO closed form
    /// `½ − (n/2)log 2π + ½ log(s²/σ₀²) − ((m−μ₀)² + s²)/(2σ₀²) + a log b − A log B + log Γ(A) − log Γ(a)`.
    ///
    /// Equals [`ModelSpec::elbo`] whenever `B` is at its coordinate optimum given `(m, s²)`.
    pub fn printed_elbo(&self, state: &MeanFieldState) -> Result<f64> {
        let (m, s_sq, rate) = self.unpack(state)?;
        let p = &self.prior;
        let n = self.n() as f64;
        let shape = self.shape();
        Ok(0.5 - 0.5 * n * (2.0 * PI).ln() + 0.5 * (s_sq / p.sigma0_sq).ln()
            - ((m - p.mu0).powi(2) + s_sq) / (2.0 * p.sigma0_sq)
            + p.a * p.b.ln()
            - shape * rate.ln()
            + ln_gamma(shape)
            - ln_gamma(p.a))
    }

    /// `log p(X | μ, σ²)`.
    pub fn log_likelihood(&self, mu: f64, sigma_sq: f64) -> f64 {
        if !(sigma_sq > 0.0) || sigma_sq.is_infinite() {
            return f64::NEG_INFINITY;
        }
        let n = self.n() as f64;
        let rss: f64 = self.data.iter().map(|x| (x - mu) * (x - mu)).sum();
        -0.5 * n * (2.0 * PI * sigma_sq).ln() - 0.5 * rss / sigma_sq
    }

    /// `μ̂ = X̄`, `σ̂² = n⁻¹ Σ(Xᵢ − X̄)²`.
    pub fn mle(&self) -> Result<MleFit> {
        let n = self.n();
        if n < 2 {
            return Err(Error::Domain(format!("normal MLE needs at least 2 observations, got {n}")));
        }
        let mean = self.sum / n as f64;
        let var = self.data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        if !(var > 0.0) {
            return Err(numeric("normal MLE undefined: data have zero spread"));
        }
        Ok(MleFit {
            theta: Vector::from_vec(vec![mean, var]),
            log_likelihood: self.log_likelihood(mean, var),
            iterations: 0,
        })
    }

    pub fn parameter_count(&self) -> usize {
        2
    }

    /// `V = diag(1/σ², 1/(2σ⁴))` at `θ* = (μ, σ²)`; no latent variables so `V_c = V`.
    pub fn fisher_bundle(&self, theta_star: (f64, f64)) -> Result<FisherBundle> {
        let (mu, sigma_sq) = theta_star;
        if !(sigma_sq > 0.0) {
            return Err(usage("θ* must have positive variance"));
        }
        let v = Matrix::from_diagonal(&Vector::from_vec(vec![1.0 / sigma_sq, 0.5 / (sigma_sq * sigma_sq)]));
        FisherBundle::from_parts(
            v.clone(),
            v,
            Vector::from_vec(vec![mu, sigma_sq]),
            self.prior.log_density(mu, sigma_sq),
            FisherSource::Analytic,
            0.0,
        )
    }
}

impl ModelSpec for NormalModel {
    fn parameter_blocks(&self) -> usize {
        2
    }

    fn sample_size(&self) -> usize {
        self.n()
    }

    fn initial_state(&self, _seed: u64) -> Result<MeanFieldState> {
        self.prior_state()
    }

    fn parameter_optimum(&self, state: &MeanFieldState, j: usize) -> Result<Factor> {
        let (m, s_sq, rate) = self.unpack(state)?;
        let p = &self.prior;
        let n = self.n() as f64;
        match j {
            0 => {
                let precision_ratio = self.shape() / rate;
                let s_sq = 1.0 / (n * precision_ratio + 1.0 / p.sigma0_sq);
                let m = (self.sum * precision_ratio + p.mu0 / p.sigma0_sq) * s_sq;
                Ok(Factor::Gaussian(GaussianFactor::new(m, s_sq)?))
            }
            1 => {
                let rate = p.b + 0.5 * self.expected_rss(m, s_sq);
                Ok(Factor::InverseGamma(InverseGammaFactor::new(self.shape(), rate)?))
            }
            _ => Err(usage(format!("normal model has 2 blocks, asked for {j}"))),
        }
    }

    fn elbo(&self, state: &MeanFieldState) -> Result<f64> {
        let mu = state.parameter(0).as_gaussian()?;
        let ig = state.parameter(1).as_inverse_gamma()?;
        let p = &self.prior;
        let n = self.n() as f64;
        let e_log_var = ig.mean_log();
        let e_precision = ig.mean_inverse();
        let likelihood = -0.5 * n * (2.0 * PI).ln()
            - 0.5 * n * e_log_var
            - 0.5 * e_precision * self.expected_rss(mu.mean(), mu.variance());
        let prior_mu =
            -0.5 * (2.0 * PI * p.sigma0_sq).ln() - ((mu.mean() - p.mu0).powi(2) + mu.variance()) / (2.0 * p.sigma0_sq);
        let prior_var = p.a * p.b.ln() - ln_gamma(p.a) - (p.a + 1.0) * e_log_var - p.b * e_precision;
        Ok(likelihood + prior_mu + prior_var + mu.entropy() + ig.entropy())
    }

    fn check_state(&self, state: &MeanFieldState) -> Result<()> {
        if state.parameter_factors.len() != 2 || !state.latent_factors.is_empty() {
            return Err(usage("normal model state needs exactly [Gaussian, InverseGamma] and no latents"));
        }
        self.unpack(state)?;
        Ok(())
    }
}

impl EvidenceModel for NormalModel {
    fn sample_prior_log_likelihood(&self, rng: &mut ChaCha8Rng) -> Result<f64> {
        let p = &self.prior;
        let mu = Normal::new(p.mu0, p.sigma0_sq.sqrt()).map_err(|e| numeric(e.to_string()))?.sample(rng);
        let precision = Gamma::new(p.a, 1.0 / p.b).map_err(|e| numeric(e.to_string()))?.sample(rng);
        Ok(self.log_likelihood(mu, 1.0 / precision))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_prior() -> NormalPrior {
        NormalPrior::new(0.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn single_datum_update_by_hand() {
        let model = NormalModel::new(vec![2.0], unit_prior()).unwrap();
        let state = model.state(0.0, 1.0, 1.0).unwrap();
        let (m, s_sq, rate) = model.unpack(&model.normal_update(&state).unwrap()).unwrap();
        // A = 1.5, s² = 1/(1.5 + 1), m = 2·1.5·s², B = 1 + ((2 − m)² + s²)/2
        assert_relative_eq!(s_sq, 0.4, epsilon = 1e-15);
        assert_relative_eq!(m, 1.2, epsilon = 1e-15);
        assert_relative_eq!(rate, 1.52, epsilon = 1e-14);
    }

    #[test]
    fn no_data_keeps_prior() {
        let model = NormalModel::new(vec![], NormalPrior::new(3.0, 2.0, 1.5, 0.7).unwrap()).unwrap();
        let state = model.prior_state().unwrap();
        let next = model.normal_update(&state).unwrap();
        assert_eq!(model.unpack(&next).unwrap(), (3.0, 2.0, 0.7));
        assert_relative_eq!(model.elbo(&next).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(model.printed_elbo(&next).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn printed_matches_generic_once_rate_is_fresh() {
        let model = NormalModel::new(vec![1.3, -0.2, 0.8, 2.1], NormalPrior::new(0.5, 4.0, 2.0, 1.5).unwrap()).unwrap();
        let mut state = model.prior_state().unwrap();
        for _ in 0..3 {
            state = model.normal_update(&state).unwrap();
            assert_relative_eq!(model.printed_elbo(&state).unwrap(), model.elbo(&state).unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn mle_is_sample_moments() {
        let model = NormalModel::new(vec![1.0, 3.0], unit_prior()).unwrap();
        let fit = model.mle().unwrap();
        assert_eq!(fit.theta.as_slice(), &[2.0, 1.0]);
        assert_relative_eq!(fit.log_likelihood, -(2.0 * PI).ln() - 1.0, epsilon = 1e-14);
        assert!(NormalModel::new(vec![1.0], unit_prior()).unwrap().mle().is_err());
    }

    #[test]
    fn analytic_fisher_has_no_missing_information() {
        let model = NormalModel::new(vec![1.0, 3.0], unit_prior()).unwrap();
        let b = model.fisher_bundle((0.0, 2.0)).unwrap();
        assert_eq!(b.v[(0, 0)], 0.5);
        assert_eq!(b.v[(1, 1)], 0.125);
        assert_eq!(b.v_s, Matrix::zeros(2, 2));
    }

    #[test]
    fn invalid_prior_rejected() {
        assert!(NormalPrior::new(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(NormalPrior::new(0.0, 1.0, -1.0, 1.0).is_err());
        assert!(NormalModel::new(vec![f64::NAN], unit_prior()).is_err());
    }
}
