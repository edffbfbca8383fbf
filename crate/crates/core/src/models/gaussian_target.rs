//! A posterior that is exactly `N(θ̂, (nV)⁻¹)`, approximated by independent
//! Gaussian factors. CAVI on it reproduces the bias recursion of
//! [`GaussianDynamics`](crate::engine::GaussianDynamics) exactly, which makes it
//! the reference problem for convergence-rate checks.

use std::f64::consts::PI;

use crate::engine::ModelSpec;
use crate::error::{usage, Result};
use crate::factors::{Factor, GaussianFactor, MeanFieldState};
use crate::linalg::{self, Matrix, Vector};

#[derive(Debug, Clone)]
pub struct GaussianTargetModel {
    v: Matrix,
    n: f64,
    center: Vector,
    log_det_nv: f64,
}

impl GaussianTargetModel {
    pub fn new(v: Matrix, n: f64, center: Vector) -> Result<Self> {
        if !(n > 0.0) {
            return Err(usage("sample size must be positive"));
        }
        if !linalg::is_symmetric(&v, 1e-12) || center.len() != v.nrows() {
            return Err(usage("V must be symmetric with the dimension of the center"));
        }
        let log_det_nv = linalg::log_det_spd(&(&v * n))?;
        Ok(Self { v, n, center, log_det_nv })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    /// State with means `θ̂ + bias` and the optimal variances `1/(n V_jj)`.
    pub fn state_with_bias(&self, bias: &Vector) -> Result<MeanFieldState> {
        if bias.len() != self.dim() {
            return Err(usage("bias length does not match the model dimension"));
        }
        let factors = (0..self.dim())
            .map(|j| Ok(Factor::Gaussian(GaussianFactor::new(self.center[j] + bias[j], self.optimal_variance(j))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MeanFieldState::new(factors, Vec::new()))
    }

    /// Means minus `θ̂`.
    pub fn bias(&self, state: &MeanFieldState) -> Result<Vector> {
        let mut b = Vector::zeros(self.dim());
        for j in 0..self.dim() {
            b[j] = state.parameter(j).as_gaussian()?.mean() - self.center[j];
        }
        Ok(b)
    }

    fn optimal_variance(&self, j: usize) -> f64 {
        1.0 / (self.n * self.v[(j, j)])
    }

    /// Maximal ELBO, attained at bias zero with the optimal variances.
    pub fn optimal_elbo(&self) -> Result<f64> {
        self.elbo(&self.state_with_bias(&Vector::zeros(self.dim()))?)
    }
}

impl ModelSpec for GaussianTargetModel {
    fn parameter_blocks(&self) -> usize {
        self.dim()
    }

    fn sample_size(&self) -> usize {
        self.n.round().max(1.0) as usize
    }

    fn initial_state(&self, _seed: u64) -> Result<MeanFieldState> {
        self.state_with_bias(&Vector::from_element(self.dim(), 1.0))
    }

    fn parameter_optimum(&self, state: &MeanFieldState, j: usize) -> Result<Factor> {
        if j >= self.dim() {
            return Err(usage(format!("block {j} out of range")));
        }
        let b = self.bias(state)?;
        let off_diagonal: f64 = (0..self.dim()).filter(|&k| k != j).map(|k| self.v[(j, k)] * b[k]).sum();
        let mean = self.center[j] - off_diagonal / self.v[(j, j)];
        Ok(Factor::Gaussian(GaussianFactor::new(mean, self.optimal_variance(j))?))
    }

    /// `E_q log N(θ | θ̂, (nV)⁻¹) + H(q)`, i.e. the ELBO with the evidence set to zero.
    fn elbo(&self, state: &MeanFieldState) -> Result<f64> {
        let d = self.dim();
        let b = self.bias(state)?;
        let mut quad = b.dot(&(&self.v * &b));
        let mut entropy = 0.0;
        for j in 0..d {
            let f = state.parameter(j).as_gaussian()?;
            quad += self.v[(j, j)] * f.variance();
            entropy += f.entropy();
        }
        Ok(-0.5 * d as f64 * (2.0 * PI).ln() + 0.5 * self.log_det_nv - 0.5 * self.n * quad + entropy)
    }

    fn check_state(&self, state: &MeanFieldState) -> Result<()> {
        if state.parameter_factors.len() != self.dim() || !state.latent_factors.is_empty() {
            return Err(usage("state layout does not match the Gaussian target"));
        }
        self.bias(state).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn regret_is_quadratic_in_bias() {
        let v = Matrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]);
        let model = GaussianTargetModel::new(v.clone(), 50.0, Vector::from_vec(vec![0.3, -1.0])).unwrap();
        let b = Vector::from_vec(vec![0.2, -0.1]);
        let regret = model.optimal_elbo().unwrap() - model.elbo(&model.state_with_bias(&b).unwrap()).unwrap();
        assert_relative_eq!(regret, 25.0 * b.dot(&(&v * &b)), epsilon = 1e-10);
    }

    #[test]
    fn optimal_elbo_is_minus_kl_to_exact_posterior() {
        // For a diagonal V mean-field is exact, so the optimal ELBO (log evidence 0) is 0.
        let v = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 3.0]));
        let model = GaussianTargetModel::new(v, 10.0, Vector::zeros(2)).unwrap();
        assert_relative_eq!(model.optimal_elbo().unwrap(), 0.0, epsilon = 1e-12);
    }
}
