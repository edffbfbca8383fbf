//! Exact CAVI dynamics for a Gaussian target.
//!
//! When the posterior is Gaussian with precision proportional to `V`, the
//! mean-field means evolve linearly in the bias `b = θ − θ̂`: a parallel sweep
//! maps `b ↦ (I − γS⁻¹V) b`, a sequential update of coordinate `ℓ` replaces
//! `b_ℓ` by `b_ℓ − γ (Vb)_ℓ / S_ℓℓ`. With latent variables the complete-data
//! diagonal `S_c` takes the place of `S`.

use rand::Rng;

use super::{Schedule, ScheduleKind};
use crate::error::{usage, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::par::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDynamics {
    v: Matrix,
    s: Vector,
    s_c: Option<Vector>,
    bias: Vector,
}

impl GaussianDynamics {
    /// `V` must be symmetric positive definite; `s_c`, when given, strictly positive.
    pub fn new(v: Matrix, s_c: Option<Vector>, bias: Vector) -> Result<Self> {
        if !linalg::is_symmetric(&v, 1e-12) {
            return Err(usage("V must be symmetric"));
        }
        linalg::cholesky(&v)?;
        if bias.len() != v.nrows() {
            return Err(usage(format!("bias has length {}, V is {}x{}", bias.len(), v.nrows(), v.ncols())));
        }
        if let Some(sc) = &s_c {
            if sc.len() != v.nrows() || sc.iter().any(|x| !(*x > 0.0)) {
                return Err(usage("S_c must be a strictly positive vector of matching length"));
            }
        }
        let s = v.diagonal();
        Ok(Self { v, s, s_c, bias })
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn s(&self) -> &Vector {
        &self.s
    }

    pub fn s_c(&self) -> Option<&Vector> {
        self.s_c.as_ref()
    }

    pub fn bias(&self) -> &Vector {
        &self.bias
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn with_bias(&self, bias: Vector) -> Result<Self> {
        if bias.len() != self.dim() {
            return Err(usage("bias length does not match V"));
        }
        Ok(Self { bias, ..self.clone() })
    }

    /// The diagonal used to scale updates: `S_c` when latents are present, `S` otherwise.
    pub fn scaling(&self) -> &Vector {
        self.s_c.as_ref().unwrap_or(&self.s)
    }

    /// Quadratic regret `(n/2) bᵀ V b`.
    pub fn regret(&self, n: f64) -> f64 {
        0.5 * n * self.bias.dot(&(&self.v * &self.bias))
    }

    /// `A_γ = I − γ S⁻¹V` (with `S_c` in place of `S` when present).
    pub fn parallel_operator(&self, gamma: f64) -> Matrix {
        let d = self.dim();
        let mut a = Matrix::identity(d, d);
        let scale = self.scaling();
        for i in 0..d {
            for j in 0..d {
                a[(i, j)] -= gamma * self.v[(i, j)] / scale[i];
            }
        }
        a
    }
}

/// Applies one update to the bias: a full parallel sweep when `coordinate` is
/// `None`, otherwise the sequential update of that coordinate alone.
pub fn gaussian_bias_update(
    dynamics: &GaussianDynamics,
    coordinate: Option<usize>,
    gamma: f64,
) -> Result<GaussianDynamics> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(usage(format!("step size must lie in (0, 1], got {gamma}")));
    }
    let scale = dynamics.scaling();
    let b = &dynamics.bias;
    let next = match coordinate {
        None => {
            let vb = &dynamics.v * b;
            Vector::from_iterator(b.len(), (0..b.len()).map(|i| b[i] - gamma * vb[i] / scale[i]))
        }
        Some(l) => {
            if l >= b.len() {
                return Err(usage(format!("coordinate {l} out of range for dimension {}", b.len())));
            }
            let vb_l = dynamics.v.row(l).dot(&b.transpose());
            let mut next = b.clone();
            next[l] = b[l] - gamma * vb_l / scale[l];
            next
        }
    };
    dynamics.with_bias(next)
}

/// One schedule step on the bias.
///
/// Parallel schedules apply a full sweep. The randomized sequential schedule
/// draws its coordinate uniformly from the RNG stream of `seed`; the systematic
/// one treats `seed` as the iteration counter and updates coordinate `seed mod d`.
pub fn gaussian_bias_step(dynamics: &GaussianDynamics, schedule: Schedule, seed: u64) -> Result<GaussianDynamics> {
    let d = dynamics.dim();
    let coordinate = match schedule.kind() {
        ScheduleKind::Parallel => None,
        ScheduleKind::SequentialRandomized => Some(stream_rng(seed, 0).random_range(0..d)),
        ScheduleKind::SequentialSystematic => Some((seed % d as u64) as usize),
    };
    gaussian_bias_update(dynamics, coordinate, schedule.step_size())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn counterexample() -> Matrix {
        Matrix::identity(3, 3) / 3.0 + Matrix::from_element(3, 3, 2.0 / 3.0)
    }

    #[test]
    fn diagonal_v_is_solved_in_one_parallel_sweep() {
        let v = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.5, 7.0]));
        let dynamics = GaussianDynamics::new(v, None, Vector::from_vec(vec![1.0, -2.0, 3.0])).unwrap();
        let next = gaussian_bias_step(&dynamics, Schedule::parallel(1.0).unwrap(), 0).unwrap();
        assert!(next.bias().amax() < 1e-15);
    }

    #[test]
    fn counterexample_flips_and_grows() {
        let dynamics = GaussianDynamics::new(counterexample(), None, Vector::from_element(3, 1.0)).unwrap();
        let next = gaussian_bias_step(&dynamics, Schedule::parallel(1.0).unwrap(), 0).unwrap();
        for x in next.bias().iter() {
            assert_relative_eq!(*x, -4.0 / 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn sequential_coordinate_update_matches_componentwise_formula() {
        let v = Matrix::from_row_slice(3, 3, &[2.0, 0.3, -0.4, 0.3, 1.0, 0.2, -0.4, 0.2, 1.5]);
        let b = Vector::from_vec(vec![0.5, -1.0, 2.0]);
        let dynamics = GaussianDynamics::new(v.clone(), None, b.clone()).unwrap();
        let next = gaussian_bias_update(&dynamics, Some(1), 1.0).unwrap();
        let expected = -(v[(1, 0)] * b[0] + v[(1, 2)] * b[2]) / v[(1, 1)];
        assert_relative_eq!(next.bias()[1], expected, epsilon = 1e-15);
        assert_eq!(next.bias()[0], b[0]);
        assert_eq!(next.bias()[2], b[2]);
    }

    #[test]
    fn latent_scaling_replaces_diagonal() {
        let v = Matrix::identity(2, 2);
        let s_c = Vector::from_vec(vec![2.0, 4.0]);
        let dynamics = GaussianDynamics::new(v, Some(s_c), Vector::from_vec(vec![1.0, 1.0])).unwrap();
        let next = gaussian_bias_update(&dynamics, None, 1.0).unwrap();
        assert_relative_eq!(next.bias()[0], 0.5);
        assert_relative_eq!(next.bias()[1], 0.75);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let not_pd = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianDynamics::new(not_pd, None, Vector::zeros(2)).is_err());
        assert!(GaussianDynamics::new(Matrix::identity(2, 2), None, Vector::zeros(3)).is_err());
        assert!(GaussianDynamics::new(
            Matrix::identity(2, 2),
            Some(Vector::from_vec(vec![1.0, 0.0])),
            Vector::zeros(2)
        )
        .is_err());
    }
}
