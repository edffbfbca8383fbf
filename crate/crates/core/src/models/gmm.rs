//! Gaussian mixture with known equal weights and unit variances:
//! `Xᵢ ~ Σₖ (1/K) N(μₖ, 1)`, `μₖ ~ N(0, σ²)` i.i.d., with assignment latents `cᵢ`.
//!
//! Variational family `∏ₖ N(mₖ, sₖ²) ∏ᵢ Categorical(φᵢ)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EvidenceModel, FisherBundle, FisherSource, MatrixMoments, MleFit};
use crate::engine::{LatentMode, ModelSpec};
use crate::error::{usage, Error, Result};
use crate::factors::{CategoricalFactor, Factor, GaussianFactor, MeanFieldState};
use crate::linalg::{Matrix, Vector};
use crate::par::{self, stream_rng};
use crate::special::{log_sum_exp, softmax_in_place, xlogx, LN_SQRT_2PI};

/// Restarts, iterations and tolerance used by [`GmmModel::mle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSettings {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self { restarts: 50, max_iterations: 500, tolerance: 1e-10, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GmmModel {
    data: Vec<f64>,
    k: usize,
    prior_sd: f64,
}

impl GmmModel {
    pub fn new(data: Vec<f64>, k: usize, prior_sd: f64) -> Result<Self> {
        if k == 0 {
            return Err(usage("a mixture needs at least one component"));
        }
        if !(prior_sd > 0.0) || !prior_sd.is_finite() {
            return Err(usage(format!("prior standard deviation must be positive, got {prior_sd}")));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(usage("mixture data must be finite"));
        }
        Ok(Self { data, k, prior_sd })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn components(&self) -> usize {
        self.k
    }

    pub fn prior_sd(&self) -> f64 {
        self.prior_sd
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    fn prior_var(&self) -> f64 {
        self.prior_sd * self.prior_sd
    }

    /// Builds a state from center factors `(mₖ, sₖ²)` and assignment rows `φᵢ`.
    pub fn state(&self, centers: &[(f64, f64)], assignments: Vec<Vec<f64>>) -> Result<MeanFieldState> {
        if centers.len() != self.k || assignments.len() != self.n() {
            return Err(usage("state dimensions do not match the mixture"));
        }
        let params = centers
            .iter()
            .map(|&(m, s2)| Ok(Factor::Gaussian(GaussianFactor::new(m, s2)?)))
            .collect::<Result<Vec<_>>>()?;
        let latents = assignments
            .into_iter()
            .map(|row| Ok(Factor::Categorical(CategoricalFactor::new(row)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MeanFieldState::new(params, latents))
    }

    fn centers<'a>(&self, state: &'a MeanFieldState) -> Result<Vec<&'a GaussianFactor>> {
        state.parameter_factors.iter().map(|f| f.as_gaussian()).collect()
    }

    fn responsibilities<'a>(&self, state: &'a MeanFieldState) -> Result<Vec<&'a [f64]>> {
        state.latent_factors.iter().map(|f| f.as_categorical().map(|c| c.probabilities())).collect()
    }

    /// Assignment optimum `φᵢₖ ∝ exp{Xᵢ mₖ − (sₖ² + mₖ²)/2}` for datum `i`.
    fn assignment_optimum(&self, x: f64, centers: &[&GaussianFactor]) -> Result<CategoricalFactor> {
        CategoricalFactor::from_log_weights(centers.iter().map(|c| x * c.mean() - 0.5 * c.second_moment()).collect())
    }

    /// The closed form
    /// `Σ Xᵢφᵢₖmₖ − ½Σ φᵢₖ(mₖ² + sₖ²) − Σ φ log φ − (1/2σ²)Σ(mₖ² + sₖ²) + ½Σ log sₖ²
    ///  − (n/2) log 2π − ΣXᵢ²/2 − n log K + (K/2)(1 − log σ²)`.
    pub fn printed_elbo(&self, state: &MeanFieldState) -> Result<f64> {
        let centers = self.centers(state)?;
        let phi = self.responsibilities(state)?;
        let n = self.n() as f64;
        let k = self.k as f64;
        let mut total = 0.0;
        for (x, row) in self.data.iter().zip(&phi) {
            for (p, c) in row.iter().zip(&centers) {
                total += x * p * c.mean() - 0.5 * p * c.second_moment() - xlogx(*p);
            }
        }
        for c in &centers {
            total += -c.second_moment() / (2.0 * self.prior_var()) + 0.5 * c.variance().ln();
        }
        let sum_sq: f64 = self.data.iter().map(|x| x * x).sum();
        Ok(total - 0.5 * n * (2.0 * PI).ln() - 0.5 * sum_sq - n * k.ln() + 0.5 * k * (1.0 - self.prior_var().ln()))
    }

    /// `log p(X | μ) = Σᵢ log Σₖ (1/K) N(Xᵢ | μₖ, 1)`.
    pub fn log_likelihood(&self, mu: &[f64]) -> Result<f64> {
        if mu.len() != self.k {
            return Err(usage(format!("expected {} centers, got {}", self.k, mu.len())));
        }
        let ln_k = (self.k as f64).ln();
        let mut buf = vec![0.0; self.k];
        let mut total = 0.0;
        for &x in &self.data {
            for (b, m) in buf.iter_mut().zip(mu) {
                *b = -0.5 * (x - m) * (x - m);
            }
            total += log_sum_exp(&buf)? - LN_SQRT_2PI - ln_k;
        }
        Ok(total)
    }

    pub fn parameter_count(&self) -> usize {
        self.k
    }

    /// `log π(μ)` under the i.i.d. `N(0, σ²)` prior.
    pub fn prior_log_density(&self, mu: &[f64]) -> f64 {
        mu.iter().map(|m| -0.5 * (2.0 * PI * self.prior_var()).ln() - m * m / (2.0 * self.prior_var())).sum()
    }

    /// Maximum likelihood by EM from several quantile-based starts; centers returned sorted.
    pub fn mle(&self, settings: EmSettings) -> Result<MleFit> {
        if self.n() == 0 {
            return Err(Error::Domain("mixture MLE needs data".into()));
        }
        let runs = par::map_indexed(settings.restarts.max(1), |r| self.em_run(r, settings));
        let mut best: Option<MleFit> = None;
        for run in runs {
            let fit = run?;
            if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
                best = Some(fit);
            }
        }
        best.ok_or_else(|| Error::NonConvergence { iterations: 0, detail: "no EM restart finished".into() })
    }

    fn em_run(&self, restart: usize, settings: EmSettings) -> Result<MleFit> {
        let mut sorted = self.data.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mut rng = stream_rng(settings.seed, restart as u64);
        let spread = (sorted[sorted.len() - 1] - sorted[0]).max(1.0);
        let mut mu: Vec<f64> = (0..self.k)
            .map(|k| {
                let q = sorted[((k as f64 + 0.5) / self.k as f64 * sorted.len() as f64) as usize];
                if restart == 0 {
                    q
                } else {
                    q + 0.25 * spread * rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        let mut weights = vec![0.0; self.k];
        let mut sums = vec![0.0; self.k];
        let mut counts = vec![0.0; self.k];
        let mut previous = f64::NEG_INFINITY;
        for it in 1..=settings.max_iterations {
            sums.iter_mut().for_each(|s| *s = 0.0);
            counts.iter_mut().for_each(|c| *c = 0.0);
            let mut loglik = 0.0;
            for &x in &self.data {
                for (w, m) in weights.iter_mut().zip(&mu) {
                    *w = -0.5 * (x - m) * (x - m);
                }
                loglik += log_sum_exp(&weights)?;
                softmax_in_place(&mut weights)?;
                for k in 0..self.k {
                    sums[k] += weights[k] * x;
                    counts[k] += weights[k];
                }
            }
            for k in 0..self.k {
                if counts[k] > 1e-300 {
                    mu[k] = sums[k] / counts[k];
                }
            }
            if (loglik - previous).abs() < settings.tolerance {
                mu.sort_by(|a, b| a.total_cmp(b));
                return Ok(MleFit {
                    log_likelihood: self.log_likelihood(&mu)?,
                    theta: Vector::from_vec(mu),
                    iterations: it,
                });
            }
            previous = loglik;
        }
        // A flat likelihood ridge can exhaust the budget; the iterate is still a valid ascent point.
        mu.sort_by(|a, b| a.total_cmp(b));
        Ok(MleFit {
            log_likelihood: self.log_likelihood(&mu)?,
            theta: Vector::from_vec(mu),
            iterations: settings.max_iterations,
        })
    }

    /// `V` by Monte Carlo over `X ~ Σ (1/K) N(μ*ₖ, 1)` of the negative Hessian of
    /// the mixture log-density; `V_c = I/K` exactly.
    pub fn fisher_bundle(&self, mu_star: &[f64], samples: usize, seed: u64) -> Result<FisherBundle> {
        if mu_star.len() != self.k {
            return Err(usage("θ* has the wrong number of centers"));
        }
        if samples < 2 {
            return Err(usage("Monte Carlo Fisher estimate needs at least 2 samples"));
        }
        let k = self.k;
        let chunks = par::chunks(samples, 10_000);
        let partials = par::map_indexed(chunks.len(), |c| {
            let (_, len) = chunks[c];
            let mut rng = stream_rng(seed, c as u64);
            let mut moments = MatrixMoments::new(k);
            let mut r = vec![0.0; k];
            let mut h = Matrix::zeros(k, k);
            for _ in 0..len {
                let comp = rng.random_range(0..k);
                let x = mu_star[comp] + rng.sample::<f64, _>(StandardNormal);
                for (rj, m) in r.iter_mut().zip(mu_star) {
                    *rj = -0.5 * (x - m) * (x - m);
                }
                // weights are finite, so the softmax cannot fail
                softmax_in_place(&mut r).expect("finite log-weights");
                for a in 0..k {
                    for b in 0..k {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        h[(a, b)] = delta * r[a] - r[a] * (delta - r[b]) * (x - mu_star[a]) * (x - mu_star[b]);
                    }
                }
                moments.push(&h);
            }
            moments
        });
        let moments = partials.into_iter().reduce(MatrixMoments::merge).expect("at least one chunk");
        FisherBundle::from_parts(
            moments.mean(),
            Matrix::identity(k, k) / k as f64,
            Vector::from_column_slice(mu_star),
            self.prior_log_density(mu_star),
            FisherSource::MonteCarlo { samples, seed },
            moments.max_stderr(),
        )
    }
}

/// `C̃* = ‖μ‖²/(2σ²) + (K/2)(log σ² − log K)` for the well-specified mixture.
pub fn theoretical_c_tilde_star(mu: &[f64], prior_sd: f64) -> f64 {
    let k = mu.len() as f64;
    let s2 = prior_sd * prior_sd;
    mu.iter().map(|m| m * m).sum::<f64>() / (2.0 * s2) + 0.5 * k * (s2.ln() - k.ln())
}

impl ModelSpec for GmmModel {
    fn parameter_blocks(&self) -> usize {
        self.k
    }

    fn sample_size(&self) -> usize {
        self.n()
    }

    /// Centers at the data quantiles `(k + ½)/K`, `sₖ² = σ²`, and near-uniform
    /// assignments with a small seeded jitter to break label symmetry.
    fn initial_state(&self, seed: u64) -> Result<MeanFieldState> {
        let mut sorted = self.data.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let centers: Vec<(f64, f64)> = (0..self.k)
            .map(|k| {
                let m = if sorted.is_empty() {
                    0.0
                } else {
                    sorted[((k as f64 + 0.5) / self.k as f64 * sorted.len() as f64) as usize]
                };
                (m, self.prior_var())
            })
            .collect();
        let mut rng = stream_rng(seed, 1);
        let assignments = (0..self.n())
            .map(|_| {
                let mut row: Vec<f64> = (0..self.k).map(|_| 1.0 + 0.01 * rng.random::<f64>()).collect();
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= total);
                row
            })
            .collect();
        self.state(&centers, assignments)
    }

    fn parameter_optimum(&self, state: &MeanFieldState, j: usize) -> Result<Factor> {
        if j >= self.k {
            return Err(usage(format!("component {j} out of range")));
        }
        let phi = self.responsibilities(state)?;
        let (mut weighted, mut mass) = (0.0, 0.0);
        for (x, row) in self.data.iter().zip(&phi) {
            weighted += x * row[j];
            mass += row[j];
        }
        let s2 = 1.0 / (1.0 / self.prior_var() + mass);
        Ok(Factor::Gaussian(GaussianFactor::new(weighted * s2, s2)?))
    }

    /// Assignment rows are conditionally independent given the centers, so both
    /// modes coincide.
    fn refresh_latents(&self, state: &mut MeanFieldState, _mode: LatentMode) -> Result<()> {
        let centers: Vec<GaussianFactor> = self.centers(state)?.into_iter().cloned().collect();
        let refs: Vec<&GaussianFactor> = centers.iter().collect();
        for (latent, &x) in state.latent_factors.iter_mut().zip(&self.data) {
            *latent = Factor::Categorical(self.assignment_optimum(x, &refs)?);
        }
        Ok(())
    }

    fn elbo(&self, state: &MeanFieldState) -> Result<f64> {
        let centers = self.centers(state)?;
        let phi = self.responsibilities(state)?;
        let ln_k = (self.k as f64).ln();
        let mut total = 0.0;
        for (x, row) in self.data.iter().zip(&phi) {
            for (p, c) in row.iter().zip(&centers) {
                let e_log_lik = -LN_SQRT_2PI - 0.5 * (x * x - 2.0 * x * c.mean() + c.second_moment());
                total += p * (e_log_lik - ln_k);
            }
        }
        for c in &centers {
            total +=
                -0.5 * (2.0 * PI * self.prior_var()).ln() - c.second_moment() / (2.0 * self.prior_var()) + c.entropy();
        }
        let assignment_entropy: f64 = state.latent_factors.iter().map(|f| f.entropy()).sum();
        Ok(total + assignment_entropy)
    }

    fn check_state(&self, state: &MeanFieldState) -> Result<()> {
        if state.parameter_factors.len() != self.k || state.latent_factors.len() != self.n() {
            return Err(usage("mixture state layout mismatch"));
        }
        self.centers(state)?;
        for row in self.responsibilities(state)? {
            if row.len() != self.k {
                return Err(usage("assignment row has the wrong number of components"));
            }
        }
        Ok(())
    }
}

impl EvidenceModel for GmmModel {
    fn sample_prior_log_likelihood(&self, rng: &mut ChaCha8Rng) -> Result<f64> {
        let mu: Vec<f64> = (0..self.k)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                self.prior_sd * z
            })
            .collect();
        self.log_likelihood(&mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::step_sequential;
    use approx::assert_relative_eq;

    #[test]
    fn single_component_is_conjugate_normal() {
        let model = GmmModel::new(vec![1.0, 2.0, 4.0], 1, 1.0).unwrap();
        let state = model.initial_state(0).unwrap();
        let next = step_sequential(&model, &state, 0, 1.0).unwrap();
        let c = next.parameter(0).as_gaussian().unwrap();
        assert_relative_eq!(c.mean(), 7.0 / 4.0, epsilon = 1e-14);
        assert_relative_eq!(c.variance(), 0.25, epsilon = 1e-14);
        assert_eq!(next.latent(1).as_categorical().unwrap().probabilities(), &[1.0]);
    }

    #[test]
    fn symmetric_centers_give_even_assignment() {
        let model = GmmModel::new(vec![0.0], 2, 1.0).unwrap();
        let mut state = model.state(&[(-1.0, 0.1), (1.0, 0.1)], vec![vec![0.9, 0.1]]).unwrap();
        model.refresh_latents(&mut state, LatentMode::InPlace).unwrap();
        let p = state.latent(0).as_categorical().unwrap().probabilities();
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn center_update_by_hand() {
        // X = (0, 1, 5), φ₁ = (1, 0.5, 0.1), σ = 1: m₁ = (0 + 0.5 + 0.5)/(1 + 1.6)
        let model = GmmModel::new(vec![0.0, 1.0, 5.0], 2, 1.0).unwrap();
        let state =
            model.state(&[(0.0, 1.0), (0.0, 1.0)], vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.1, 0.9]]).unwrap();
        let c = model.parameter_optimum(&state, 0).unwrap();
        let c = c.as_gaussian().unwrap();
        assert_relative_eq!(c.mean(), 1.0 / 2.6, epsilon = 1e-15);
        assert_relative_eq!(c.variance(), 1.0 / 2.6, epsilon = 1e-15);
    }

    #[test]
    fn printed_elbo_without_data_is_zero() {
        // q equals the prior, so the ELBO is −KL(q‖π) = 0: the prior term −(m² + s²)/2σ² = −½
        // cancels the +½ from (K/2)(1 − log σ²).
        let model = GmmModel::new(vec![], 1, 1.0).unwrap();
        let state = model.state(&[(0.0, 1.0)], vec![]).unwrap();
        assert_relative_eq!(model.printed_elbo(&state).unwrap(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(model.elbo(&state).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn c_tilde_example() {
        let mu = [-1.0, 0.0, 1.0];
        assert_relative_eq!(theoretical_c_tilde_star(&mu, 2.0), 0.25 + 1.5 * (4f64 / 3.0).ln(), epsilon = 1e-14);
    }
}
