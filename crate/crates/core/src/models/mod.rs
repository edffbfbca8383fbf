//! The four closed-form model families, plus an exactly Gaussian target used to
//! study CAVI dynamics.
//!
//! Every family implements [`ModelSpec`](crate::engine::ModelSpec) for CAVI and
//! [`EvidenceModel`] for Monte Carlo evidence. Each also exposes the optimal-ELBO
//! closed form as typeset for the fixed point (`printed_elbo`) next to the
//! generic expectation-based ELBO used along CAVI trajectories.

pub mod gaussian_target;
pub mod gmm;
pub mod normal;
pub mod probit;
pub mod sbm;

pub use gaussian_target::GaussianTargetModel;
pub use gmm::GmmModel;
pub use normal::{NormalModel, NormalPrior};
pub use probit::{Factorization, ProbitModel};
pub use sbm::{SbmModel, SbmPrior};

use rand_chacha::ChaCha8Rng;

use crate::error::{numeric, usage, Result};
use crate::linalg::{self, Matrix, Vector};

/// A model whose evidence `p(data) = ∫ p(data | θ) π(θ) dθ` can be estimated by
/// sampling `θ` from the prior.
pub trait EvidenceModel: Sync {
    /// Draws `θ ~ π` and returns `log p(data | θ)` with latent variables
    /// marginalized out.
    fn sample_prior_log_likelihood(&self, rng: &mut ChaCha8Rng) -> Result<f64>;
}

/// Maximum-likelihood fit `(θ̂, ℓ̂_n)` of the observed-data likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub theta: Vector,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// How a [`FisherBundle`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherSource {
    Analytic,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Observed, missing and complete-data information at `θ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherBundle {
    pub v: Matrix,
    pub v_s: Matrix,
    pub v_c: Matrix,
    pub s: Vector,
    pub s_c: Vector,
    pub theta_star: Vector,
    pub prior_log_density_at_theta_star: f64,
    pub source: FisherSource,
    /// Largest entrywise Monte Carlo standard error of `V` (zero for analytic bundles).
    pub v_stderr: f64,
}

impl FisherBundle {
    /// Builds a bundle from `V` and `V_c`, deriving `V_s = V_c − V` and the diagonals.
    pub fn from_parts(
        v: Matrix,
        v_c: Matrix,
        theta_star: Vector,
        prior_log_density_at_theta_star: f64,
        source: FisherSource,
        v_stderr: f64,
    ) -> Result<Self> {
        let d = theta_star.len();
        if v.shape() != (d, d) || v_c.shape() != (d, d) {
            return Err(usage(format!("information matrices must be {d}x{d}")));
        }
        let v = linalg::symmetrize(&v);
        let v_c = linalg::symmetrize(&v_c);
        if linalg::cholesky(&v).is_err() {
            return Err(numeric(match source {
                FisherSource::MonteCarlo { samples, .. } => format!(
                    "Monte Carlo estimate of V is not positive definite with {samples} samples; increase the sample count"
                ),
                FisherSource::Analytic => "information matrix V is not positive definite".to_string(),
            }));
        }
        let s = v.diagonal();
        let s_c = v_c.diagonal();
        if s_c.iter().any(|x| !(*x > 0.0)) {
            return Err(numeric("complete-data information has a non-positive diagonal"));
        }
        Ok(Self { v_s: &v_c - &v, v, v_c, s, s_c, theta_star, prior_log_density_at_theta_star, source, v_stderr })
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn has_latents(&self) -> bool {
        self.v_s.amax() > 0.0
    }
}

/// Running mean and entrywise standard error of i.i.d. matrix-valued samples.
pub(crate) struct MatrixMoments {
    n: usize,
    sum: Matrix,
    sum_sq: Matrix,
}

impl MatrixMoments {
    pub(crate) fn new(d: usize) -> Self {
        Self { n: 0, sum: Matrix::zeros(d, d), sum_sq: Matrix::zeros(d, d) }
    }

    pub(crate) fn push(&mut self, m: &Matrix) {
        self.n += 1;
        self.sum += m;
        self.sum_sq += m.component_mul(m);
    }

    pub(crate) fn merge(mut self, other: MatrixMoments) -> Self {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub(crate) fn mean(&self) -> Matrix {
        &self.sum / self.n.max(1) as f64
    }

    /// Largest entrywise standard error of the mean.
    pub(crate) fn max_stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        let n = self.n as f64;
        let mean = self.mean();
        let var = (&self.sum_sq / n - mean.component_mul(&mean)) * (n / (n - 1.0));
        var.iter().map(|v| (v.max(0.0) / n).sqrt()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_derives_missing_information() {
        let v = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let v_c = Matrix::from_row_slice(2, 2, &[2.0, 0.2, 0.2, 1.0]);
        let b = FisherBundle::from_parts(v.clone(), v_c.clone(), Vector::zeros(2), 0.0, FisherSource::Analytic, 0.0)
            .unwrap();
        assert_eq!(&b.v_c - &b.v - &b.v_s, Matrix::zeros(2, 2));
        assert_eq!(b.s, v.diagonal());
        assert!(b.has_latents());
    }

    #[test]
    fn non_pd_monte_carlo_bundle_advises_more_samples() {
        let v = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = FisherBundle::from_parts(
            v.clone(),
            Matrix::identity(2, 2),
            Vector::zeros(2),
            0.0,
            FisherSource::MonteCarlo { samples: 10, seed: 1 },
            0.1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("increase the sample count"));
    }
}
