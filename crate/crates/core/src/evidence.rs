//! Monte Carlo estimation of the log evidence `log p(Xⁿ) = log ∫ p(Xⁿ|θ) π(θ) dθ`
//! by sampling `θ` from the prior, plus a closed-form conjugate oracle.

use crate::error::{numeric, usage, Result};
use crate::models::EvidenceModel;
use crate::par::{self, stream_rng};
use crate::special::LN_SQRT_2PI;

/// Draws per RNG stream; chunk `c` uses stream `c` of the seed.
pub const CHUNK_SIZE: usize = 4096;
/// Effective sample sizes below this trigger a warning.
pub const LOW_ESS_WARNING: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvidenceEstimate {
    pub log_evidence: f64,
    /// Delta-method standard error of `log_evidence`.
    pub stderr_log: f64,
    pub samples: usize,
    pub seed: u64,
    /// `(Σw)² / Σw²` of the importance weights.
    pub effective_sample_size: f64,
}

/// `log((1/N) Σₖ p(Xⁿ | θₖ))`, `θₖ ~ π` i.i.d.
///
/// Draws are generated in fixed-size chunks with independent sub-streams and
/// reduced in index order, so the result does not depend on the thread count.
pub fn mc_evidence(model: &dyn EvidenceModel, samples: usize, seed: u64) -> Result<EvidenceEstimate> {
    if samples == 0 {
        return Err(usage("evidence estimation needs at least one sample"));
    }
    let chunks = par::chunks(samples, CHUNK_SIZE);
    let draws = par::map_indexed(chunks.len(), |c| -> Result<Vec<f64>> {
        let mut rng = stream_rng(seed, c as u64);
        (0..chunks[c].1).map(|_| model.sample_prior_log_likelihood(&mut rng)).collect()
    });
    let mut log_weights = Vec::with_capacity(samples);
    for chunk in draws {
        log_weights.extend(chunk?);
    }
    summarize(&log_weights, seed)
}

fn summarize(log_weights: &[f64], seed: u64) -> Result<EvidenceEstimate> {
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(numeric("log-likelihood draw is NaN or +∞"));
    }
    let shift = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(numeric("every prior draw gives zero likelihood; the data are impossible under the model"));
    }
    let n = log_weights.len() as f64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for &lw in log_weights {
        let w = (lw - shift).exp();
        sum += w;
        sum_sq += w * w;
    }
    let mean = sum / n;
    let stderr_log = if log_weights.len() > 1 {
        let variance = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (variance / n).sqrt() / mean
    } else {
        0.0
    };
    let effective_sample_size = sum * sum / sum_sq;
    if effective_sample_size < LOW_ESS_WARNING {
        log::warn!(
            "evidence estimate dominated by few draws: effective sample size {effective_sample_size:.1} of {} samples",
            log_weights.len()
        );
    }
    Ok(EvidenceEstimate {
        log_evidence: shift + mean.ln(),
        stderr_log,
        samples: log_weights.len(),
        seed,
        effective_sample_size,
    })
}

/// `log N(Xⁿ | μ₀1, σ²I + σ₀²11ᵀ)`, the exact evidence of `Xᵢ ~ N(μ, σ²)` with
/// `μ ~ N(μ₀, σ₀²)`, using `det = σ^{2n}(1 + nσ₀²/σ²)` and the Sherman–Morrison inverse.
pub fn closed_form_evidence_normal_known_variance(
    data: &[f64],
    mu0: f64,
    prior_var: f64,
    noise_var: f64,
) -> Result<f64> {
    if !(prior_var > 0.0 && noise_var > 0.0) {
        return Err(usage("variances must be positive"));
    }
    let n = data.len() as f64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for &x in data {
        let r = x - mu0;
        sum += r;
        sum_sq += r * r;
    }
    let denominator = noise_var + n * prior_var;
    let quad = (sum_sq - prior_var * sum * sum / denominator) / noise_var;
    let log_det = n * noise_var.ln() + (denominator / noise_var).ln();
    Ok(-n * LN_SQRT_2PI - 0.5 * log_det - 0.5 * quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{self, Matrix, Vector};
    use approx::assert_relative_eq;
    use rand_chacha::ChaCha8Rng;

    struct Fixed(f64);

    impl EvidenceModel for Fixed {
        fn sample_prior_log_likelihood(&self, _rng: &mut ChaCha8Rng) -> Result<f64> {
            Ok(self.0)
        }
    }

    #[test]
    fn single_draw_is_its_log_likelihood() {
        let est = mc_evidence(&Fixed(-12.5), 1, 3).unwrap();
        assert_eq!(est.log_evidence, -12.5);
        assert_eq!(est.stderr_log, 0.0);
        assert_eq!(est.samples, 1);
    }

    #[test]
    fn impossible_data_is_an_error() {
        assert!(mc_evidence(&Fixed(f64::NEG_INFINITY), 10, 0).is_err());
        assert!(mc_evidence(&Fixed(0.0), 0, 0).is_err());
    }

    #[test]
    fn closed_form_single_point() {
        let value = closed_form_evidence_normal_known_variance(&[0.0], 0.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(value, -0.5 * (4.0 * std::f64::consts::PI).ln(), epsilon = 1e-14);
    }

    #[test]
    fn closed_form_matches_dense_density() {
        let data = [0.7, -1.3, 2.2];
        let (mu0, s0, s) = (0.4, 2.5, 0.8);
        let cov = Matrix::identity(3, 3) * s + Matrix::from_element(3, 3, s0);
        let r = Vector::from_iterator(3, data.iter().map(|x| x - mu0));
        let dense = -3.0 * LN_SQRT_2PI
            - 0.5 * linalg::log_det_spd(&cov).unwrap()
            - 0.5 * r.dot(&(linalg::inverse_spd(&cov).unwrap() * &r));
        let fast = closed_form_evidence_normal_known_variance(&data, mu0, s0, s).unwrap();
        assert_relative_eq!(fast, dense, epsilon = 1e-12);
    }
}
