//! Probit regression `Yᵢ ~ Ber(Φ(Xᵢᵀβ))`, `β ~ N(0, Σ₀)`, augmented with
//! `Zᵢ | β ~ N(Xᵢᵀβ, 1)` so that `Yᵢ = 1{Zᵢ ≥ 0}`.
//!
//! Two variational families are supported: the block family `q(β) ∏ q(Zᵢ)`
//! with a full-covariance Gaussian for `β`, and the fully factorized family
//! `∏ⱼ q(βⱼ) ∏ q(Zᵢ)`. In both, `q(Zᵢ)` is a unit-variance Gaussian truncated to
//! the side selected by `Yᵢ`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{EvidenceModel, FisherBundle, FisherSource, MatrixMoments, MleFit};
use crate::engine::{LatentMode, ModelSpec};
use crate::error::{numeric, usage, Error, Result};
use crate::factors::{Factor, GaussianFactor, MeanFieldState, MultivariateGaussianFactor, TruncatedGaussianFactor};
use crate::linalg::{self, Matrix, Vector};
use crate::par::{self, stream_rng};
use crate::special::{inverse_mills, log_norm_cdf, log_side_probability, Side, LN_SQRT_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Factorization {
    /// `β` kept as one multivariate Gaussian block.
    Block,
    /// One scalar Gaussian factor per coefficient.
    FullyFactorized,
}

impl std::str::FromStr for Factorization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(Factorization::Block),
            "factorized" | "fully_factorized" => Ok(Factorization::FullyFactorized),
            other => Err(usage(format!("unknown factorization '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbitModel {
    x: Matrix,
    y: Vec<u8>,
    sides: Vec<Side>,
    prior_cov: Matrix,
    prior_precision: Matrix,
    log_det_prior: f64,
    mode: Factorization,
    xtx: Matrix,
    /// `A = XᵀX + Σ₀⁻¹`.
    a: Matrix,
    a_inv: Matrix,
    log_det_a: f64,
}

impl ProbitModel {
    pub fn new(x: Matrix, y: Vec<u8>, prior_cov: Matrix, mode: Factorization) -> Result<Self> {
        let (n, d) = x.shape();
        if y.len() != n {
            return Err(usage(format!("design has {n} rows but {} responses", y.len())));
        }
        if d == 0 {
            return Err(usage("probit model needs at least one feature"));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(usage("responses must be 0 or 1"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(usage("design matrix must be finite"));
        }
        if prior_cov.shape() != (d, d) || !linalg::is_symmetric(&prior_cov, 1e-12) {
            return Err(usage(format!("prior covariance must be a symmetric {d}x{d} matrix")));
        }
        let prior_precision = linalg::inverse_spd(&prior_cov)?;
        let log_det_prior = linalg::log_det_spd(&prior_cov)?;
        let xtx = linalg::symmetrize(&(x.transpose() * &x));
        let a = &xtx + &prior_precision;
        let a_inv = linalg::inverse_spd(&a)?;
        let log_det_a = linalg::log_det_spd(&a)?;
        let sides = y.iter().map(|&v| Side::from_response(v)).collect();
        Ok(Self { x, y, sides, prior_cov, prior_precision, log_det_prior, mode, xtx, a, a_inv, log_det_a })
    }

    /// `Σ₀ = σ₀² I`.
    pub fn with_isotropic_prior(x: Matrix, y: Vec<u8>, prior_sd: f64, mode: Factorization) -> Result<Self> {
        if !(prior_sd > 0.0) {
            return Err(usage("prior standard deviation must be positive"));
        }
        let d = x.ncols();
        Self::new(x, y, Matrix::identity(d, d) * (prior_sd * prior_sd), mode)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn design(&self) -> &Matrix {
        &self.x
    }

    pub fn responses(&self) -> &[u8] {
        &self.y
    }

    pub fn prior_cov(&self) -> &Matrix {
        &self.prior_cov
    }

    pub fn factorization(&self) -> Factorization {
        self.mode
    }

    /// The same data and prior under another variational family.
    pub fn with_factorization(&self, mode: Factorization) -> Self {
        Self { mode, ..self.clone() }
    }

    /// The sub-model using only the given feature columns (prior restricted accordingly).
    pub fn select_features(&self, features: &[usize]) -> Result<Self> {
        if features.is_empty() || features.iter().any(|&j| j >= self.dim()) {
            return Err(usage("feature subset must be non-empty and in range"));
        }
        let x = self.x.select_columns(features);
        let prior = self.prior_cov.select_rows(features).select_columns(features);
        Self::new(x, self.y.clone(), prior, self.mode)
    }

    /// State with coefficient means `mu` (optimal covariance) and latent locations `Xμ`.
    pub fn state_from_mean(&self, mu: &Vector) -> Result<MeanFieldState> {
        if mu.len() != self.dim() {
            return Err(usage("coefficient vector has the wrong length"));
        }
        let params = match self.mode {
            Factorization::Block => {
                vec![Factor::MultivariateGaussian(MultivariateGaussianFactor::new(mu.clone(), self.a_inv.clone())?)]
            }
            Factorization::FullyFactorized => (0..self.dim())
                .map(|j| Ok(Factor::Gaussian(GaussianFactor::new(mu[j], 1.0 / self.a[(j, j)])?)))
                .collect::<Result<Vec<_>>>()?,
        };
        let eta = &self.x * mu;
        let latents = eta
            .iter()
            .zip(&self.sides)
            .map(|(&l, &side)| Ok(Factor::TruncatedGaussian(TruncatedGaussianFactor::new(l, side)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MeanFieldState::new(params, latents))
    }

    /// `E_q[β]`.
    pub fn coefficient_mean(&self, state: &MeanFieldState) -> Result<Vector> {
        match self.mode {
            Factorization::Block => Ok(state.parameter(0).as_multivariate_gaussian()?.mean().clone()),
            Factorization::FullyFactorized => {
                let mut mu = Vector::zeros(self.dim());
                for j in 0..self.dim() {
                    mu[j] = state.parameter(j).as_gaussian()?.mean();
                }
                Ok(mu)
            }
        }
    }

    fn coefficient_cov(&self, state: &MeanFieldState) -> Result<Matrix> {
        match self.mode {
            Factorization::Block => Ok(state.parameter(0).as_multivariate_gaussian()?.covariance().clone()),
            Factorization::FullyFactorized => {
                let mut cov = Matrix::zeros(self.dim(), self.dim());
                for j in 0..self.dim() {
                    cov[(j, j)] = state.parameter(j).as_gaussian()?.variance();
                }
                Ok(cov)
            }
        }
    }

    /// `E_q[Z]`.
    pub fn latent_means(&self, state: &MeanFieldState) -> Result<Vector> {
        let mut z = Vector::zeros(self.n());
        for (i, f) in state.latent_factors.iter().enumerate() {
            z[i] = f.as_truncated_gaussian()?.mean();
        }
        Ok(z)
    }

    /// The optimal-ELBO closed form
    /// `Σᵢ log Φ(±Xᵢμ) − ½ μᵀΣ₀⁻¹μ − ½ log det(Σ₀XᵀX + I)` (block), with the last term
    /// replaced by `−½ log det Σ₀ − ½ log det diag(XᵀX + Σ₀⁻¹)` when fully factorized.
    ///
    /// Equals [`ModelSpec::elbo`] whenever the latent locations equal `Xμ` and the
    /// coefficient covariance is at its fixed value.
    pub fn printed_elbo(&self, state: &MeanFieldState) -> Result<f64> {
        let mu = self.coefficient_mean(state)?;
        let fit = self.log_likelihood(&mu);
        let penalty = 0.5 * mu.dot(&(&self.prior_precision * &mu));
        let volume = match self.mode {
            Factorization::Block => 0.5 * (self.log_det_prior + self.log_det_a),
            Factorization::FullyFactorized => {
                0.5 * self.log_det_prior + 0.5 * self.a.diagonal().iter().map(|v| v.ln()).sum::<f64>()
            }
        };
        Ok(fit - penalty - volume)
    }

    /// `Σᵢ log Φ(±Xᵢᵀβ)`.
    pub fn log_likelihood(&self, beta: &Vector) -> f64 {
        let eta = &self.x * beta;
        eta.iter().zip(&self.sides).map(|(&l, &s)| log_side_probability(l, s)).sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.dim()
    }

    /// `log N(β | 0, Σ₀)`.
    pub fn prior_log_density(&self, beta: &Vector) -> f64 {
        -(self.dim() as f64) * LN_SQRT_2PI - 0.5 * self.log_det_prior - 0.5 * beta.dot(&(&self.prior_precision * beta))
    }

    /// Maximum likelihood by damped Newton on the (concave) probit log-likelihood.
    pub fn mle(&self) -> Result<MleFit> {
        probit_mle(&self.x, &self.sides)
    }

    /// [`ProbitModel::mle`] started from `start`.
    pub fn mle_from(&self, start: &Vector) -> Result<MleFit> {
        probit_mle_from(&self.x, &self.sides, start)
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    /// `P(Y = 1 | x) = Φ(xᵀβ)` for each row of `x`.
    pub fn predict_probabilities(x: &Matrix, beta: &Vector) -> Vector {
        (x * beta).map(|l| log_norm_cdf(l).exp())
    }

    /// Fisher bundle at `β*` for features `x ~ N(0, Σ_x)`.
    ///
    /// `V = E[φ²(xᵀβ*)/(Φ(1 − Φ)) xxᵀ]` is estimated by Monte Carlo; the
    /// complete-data information is `V_c = E[xxᵀ] = Σ_x` exactly.
    pub fn fisher_bundle_gaussian_design(
        beta_star: &Vector,
        feature_cov: &Matrix,
        prior_cov: &Matrix,
        samples: usize,
        seed: u64,
    ) -> Result<FisherBundle> {
        let d = beta_star.len();
        if feature_cov.shape() != (d, d) || prior_cov.shape() != (d, d) {
            return Err(usage("covariances must match the coefficient dimension"));
        }
        if samples < 2 {
            return Err(usage("Monte Carlo Fisher estimate needs at least 2 samples"));
        }
        let chol = linalg::cholesky(feature_cov)?;
        let l = chol.l();
        let chunks = par::chunks(samples, 20_000);
        let partials = par::map_indexed(chunks.len(), |c| {
            let (_, len) = chunks[c];
            let mut rng = stream_rng(seed, c as u64);
            let mut moments = MatrixMoments::new(d);
            let mut z = Vector::zeros(d);
            for _ in 0..len {
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let x = &l * &z;
                let w = probit_information_weight(x.dot(beta_star));
                moments.push(&(&x * x.transpose() * w));
            }
            moments
        });
        let moments = partials.into_iter().reduce(MatrixMoments::merge).expect("at least one chunk");
        let prior_precision = linalg::inverse_spd(prior_cov)?;
        let prior_log_density = -(d as f64) * LN_SQRT_2PI
            - 0.5 * linalg::log_det_spd(prior_cov)?
            - 0.5 * beta_star.dot(&(&prior_precision * beta_star));
        FisherBundle::from_parts(
            moments.mean(),
            feature_cov.clone(),
            beta_star.clone(),
            prior_log_density,
            FisherSource::MonteCarlo { samples, seed },
            moments.max_stderr(),
        )
    }
}

/// `φ(η)² / (Φ(η)Φ(−η))`, evaluated in log space so that it stays finite in both tails.
pub fn probit_information_weight(eta: f64) -> f64 {
    (-eta * eta - 2.0 * LN_SQRT_2PI - log_norm_cdf(eta) - log_norm_cdf(-eta)).exp()
}

/// Probit MLE for design `x` and response sides, started at `β = 0`.
pub fn probit_mle(x: &Matrix, sides: &[Side]) -> Result<MleFit> {
    probit_mle_from(x, sides, &Vector::zeros(x.ncols()))
}

/// Probit MLE by damped Newton from `start` (useful for warm starts along a
/// nested model path).
pub fn probit_mle_from(x: &Matrix, sides: &[Side], start: &Vector) -> Result<MleFit> {
    let (n, d) = x.shape();
    if start.len() != d || sides.len() != n {
        return Err(usage("start vector or responses do not match the design"));
    }
    let loglik =
        |beta: &Vector| -> f64 { (x * beta).iter().zip(sides).map(|(&l, &s)| log_side_probability(l, s)).sum() };
    let mut beta = start.clone();
    let mut current = loglik(&beta);
    const MAX_ITERATIONS: usize = 100;
    for it in 1..=MAX_ITERATIONS {
        let eta = x * &beta;
        let mut score = Vector::zeros(n);
        let mut weighted = x.clone();
        for i in 0..n {
            let s = sides[i].sign();
            let t = s * eta[i];
            let lambda = inverse_mills(t);
            score[i] = s * lambda;
            weighted.row_mut(i).scale_mut((lambda * (lambda + t)).max(0.0).sqrt());
        }
        let grad = x.transpose() * score;
        let info = weighted.transpose() * &weighted;
        let step = linalg::cholesky(&linalg::symmetrize(&info))
            .map_err(|_| Error::NonConvergence {
                iterations: it,
                detail: format!("probit information matrix singular (separable data?); |grad| = {:.3e}", grad.amax()),
            })?
            .solve(&grad);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = &beta + &step * scale;
            let value = loglik(&candidate);
            if value >= current - 1e-12 * current.abs().max(1.0) {
                beta = candidate;
                let improvement = value - current;
                current = value;
                accepted = true;
                if improvement.abs() < 1e-12 * current.abs().max(1.0) && step.amax() * scale < 1e-8 {
                    return Ok(MleFit { theta: beta, log_likelihood: current, iterations: it });
                }
                break;
            }
            scale *= 0.5;
        }
        if !accepted || step.amax() < 1e-12 {
            return Ok(MleFit { theta: beta, log_likelihood: current, iterations: it });
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, detail: format!("Newton iterate {:?}", beta.as_slice()) })
}

impl ModelSpec for ProbitModel {
    fn parameter_blocks(&self) -> usize {
        match self.mode {
            Factorization::Block => 1,
            Factorization::FullyFactorized => self.dim(),
        }
    }

    fn sample_size(&self) -> usize {
        self.n()
    }

    /// `μ_β = 0`, latent locations from one latent update (all at zero).
    fn initial_state(&self, _seed: u64) -> Result<MeanFieldState> {
        self.state_from_mean(&Vector::zeros(self.dim()))
    }

    fn parameter_optimum(&self, state: &MeanFieldState, j: usize) -> Result<Factor> {
        let xt_z = self.x.transpose() * self.latent_means(state)?;
        match self.mode {
            Factorization::Block => {
                if j != 0 {
                    return Err(usage("block probit has a single parameter block"));
                }
                Ok(Factor::MultivariateGaussian(MultivariateGaussianFactor::new(
                    &self.a_inv * xt_z,
                    self.a_inv.clone(),
                )?))
            }
            Factorization::FullyFactorized => {
                if j >= self.dim() {
                    return Err(usage(format!("coefficient {j} out of range")));
                }
                let mu = self.coefficient_mean(state)?;
                let cross: f64 = (0..self.dim()).filter(|&k| k != j).map(|k| self.a[(j, k)] * mu[k]).sum();
                let ajj = self.a[(j, j)];
                Ok(Factor::Gaussian(GaussianFactor::new((xt_z[j] - cross) / ajj, 1.0 / ajj)?))
            }
        }
    }

    /// `q(Zᵢ) = N±(Xᵢᵀ E_q[β], 1)`; the latents do not interact, so both modes coincide.
    fn refresh_latents(&self, state: &mut MeanFieldState, _mode: LatentMode) -> Result<()> {
        let eta = &self.x * self.coefficient_mean(state)?;
        for (i, f) in state.latent_factors.iter_mut().enumerate() {
            *f = Factor::TruncatedGaussian(TruncatedGaussianFactor::new(eta[i], self.sides[i])?);
        }
        Ok(())
    }

    fn elbo(&self, state: &MeanFieldState) -> Result<f64> {
        let mu = self.coefficient_mean(state)?;
        let cov = self.coefficient_cov(state)?;
        let eta = &self.x * &mu;
        // Σᵢ Xᵢᵀ Σ Xᵢ = tr(XᵀX Σ).
        let mut total = -0.5 * self.xtx.component_mul(&cov).sum();
        for (i, f) in state.latent_factors.iter().enumerate() {
            let z = f.as_truncated_gaussian()?;
            let (loc, mean_z) = (z.location(), z.mean());
            // E log N(Zᵢ | Xᵢβ, 1) + H(q_Zᵢ); the E[Zᵢ²] terms cancel.
            total +=
                z.ln_normalizer() - 0.5 * (eta[i] * eta[i] - 2.0 * mean_z * eta[i] + 2.0 * mean_z * loc - loc * loc);
        }
        let d = self.dim() as f64;
        let log_det_cov = match self.mode {
            Factorization::Block => linalg::log_det_spd(&cov)?,
            Factorization::FullyFactorized => linalg::log_det_diagonal(&cov)?,
        };
        let prior_part = -0.5 * mu.dot(&(&self.prior_precision * &mu))
            - 0.5 * (&self.prior_precision * &cov).trace()
            - 0.5 * self.log_det_prior
            + 0.5 * log_det_cov
            + 0.5 * d;
        Ok(total + prior_part)
    }

    fn check_state(&self, state: &MeanFieldState) -> Result<()> {
        if state.parameter_factors.len() != self.parameter_blocks() || state.latent_factors.len() != self.n() {
            return Err(usage("probit state layout mismatch"));
        }
        let mu = self.coefficient_mean(state)?;
        if mu.len() != self.dim() {
            return Err(usage("coefficient factor has the wrong dimension"));
        }
        for (f, &side) in state.latent_factors.iter().zip(&self.sides) {
            if f.as_truncated_gaussian()?.side() != side {
                return Err(usage("latent factor truncated to the wrong side"));
            }
        }
        Ok(())
    }
}

impl EvidenceModel for ProbitModel {
    fn sample_prior_log_likelihood(&self, rng: &mut ChaCha8Rng) -> Result<f64> {
        let chol = linalg::cholesky(&self.prior_cov).map_err(|_| numeric("prior covariance not PD"))?;
        let z = Vector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        Ok(self.log_likelihood(&(chol.l() * z)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::step_parallel;
    use approx::assert_relative_eq;

    fn symmetric_pair() -> ProbitModel {
        ProbitModel::new(
            Matrix::from_row_slice(2, 1, &[1.0, 1.0]),
            vec![1, 0],
            Matrix::from_element(1, 1, 100.0),
            Factorization::Block,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_pair_sweep_and_elbo() {
        let model = symmetric_pair();
        let state = model.initial_state(0).unwrap();
        let z = model.latent_means(&state).unwrap();
        let half_normal = (2.0 / std::f64::consts::PI).sqrt();
        assert_relative_eq!(z[0], half_normal, epsilon = 1e-15);
        assert_relative_eq!(z[1], -half_normal, epsilon = 1e-15);
        let next = step_parallel(&model, &state, 1.0).unwrap();
        assert_relative_eq!(model.coefficient_mean(&next).unwrap()[0], 0.0, epsilon = 1e-15);
        let expected = -2.0 * 2f64.ln() - 0.5 * 201f64.ln();
        assert_relative_eq!(model.printed_elbo(&next).unwrap(), expected, epsilon = 1e-12);
        assert_relative_eq!(model.elbo(&next).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_pair_mle() {
        let fit = symmetric_pair().mle().unwrap();
        assert_relative_eq!(fit.theta[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(fit.log_likelihood, 2.0 * 0.5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn information_weight_is_finite_in_tails() {
        assert_relative_eq!(probit_information_weight(0.0), 2.0 / std::f64::consts::PI, epsilon = 1e-15);
        // Far in the tails w(η) ≈ φ(η)·(|η| + 1/|η|): positive at ±10, underflowing to 0 at ±40.
        for &eta in &[-10.0f64, 10.0] {
            let w = probit_information_weight(eta);
            let approx = crate::special::norm_pdf(eta) * (eta.abs() + 1.0 / eta.abs());
            assert_relative_eq!(w, approx, max_relative = 1e-3);
        }
        for &eta in &[-40.0, 40.0] {
            let w = probit_information_weight(eta);
            assert!(w.is_finite() && w >= 0.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Matrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(ProbitModel::new(x.clone(), vec![1], Matrix::identity(1, 1), Factorization::Block).is_err());
        assert!(ProbitModel::new(x.clone(), vec![1, 2], Matrix::identity(1, 1), Factorization::Block).is_err());
        assert!(ProbitModel::new(x, vec![1, 0], Matrix::from_element(1, 1, -1.0), Factorization::Block).is_err());
    }
}
