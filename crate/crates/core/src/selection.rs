//! Model-selection criteria (ELBO, BIC, AIC and their prior-penalized variants),
//! the asymptotic gap constants between ELBO, evidence and −BIC/2, and the
//! contraction rates of CAVI near the optimum.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::engine::ScheduleKind;
use crate::error::{usage, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::models::{FisherBundle, MleFit};
use crate::par::stream_rng;

/// `−2ℓ̂ₙ + d log n`.
pub fn bic(loglik_max: f64, d_m: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(usage("BIC needs at least one observation"));
    }
    Ok(-2.0 * loglik_max + d_m as f64 * (n as f64).ln())
}

/// `−2ℓ̂ₙ + 2d`.
pub fn aic(loglik_max: f64, d_m: usize) -> f64 {
    -2.0 * loglik_max + 2.0 * d_m as f64
}

/// `(ELBO + log π(M), BIC − 2 log π(M))`.
pub fn penalized_criteria(elbo: f64, bic: f64, log_model_prior: f64) -> (f64, f64) {
    (elbo + log_model_prior, bic - 2.0 * log_model_prior)
}

/// `ELBO(M₀) − ELBO(M₁)`, the ELBO surrogate of the log Bayes factor of `M₀` against `M₁`.
pub fn elbo_factor(elbo0: f64, elbo1: f64) -> f64 {
    elbo0 - elbo1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    Elbo,
    Bic,
    Aic,
    PenalizedElbo,
    ExtendedBic,
    Evidence,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::Elbo,
        Criterion::Bic,
        Criterion::Aic,
        Criterion::PenalizedElbo,
        Criterion::ExtendedBic,
        Criterion::Evidence,
    ];

    /// Whether larger values are better (ELBO-type and evidence) or smaller (BIC-type).
    pub fn maximize(self) -> bool {
        matches!(self, Criterion::Elbo | Criterion::PenalizedElbo | Criterion::Evidence)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Elbo => "elbo",
            Criterion::Bic => "bic",
            Criterion::Aic => "aic",
            Criterion::PenalizedElbo => "penalized_elbo",
            Criterion::ExtendedBic => "extended_bic",
            Criterion::Evidence => "evidence",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| usage(format!("unknown criterion '{s}'")))
    }
}

/// All criteria of one candidate model.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionValue {
    pub model_id: String,
    pub elbo: f64,
    pub bic: f64,
    pub aic: f64,
    pub penalized_elbo: Option<f64>,
    pub extended_bic: Option<f64>,
    /// `(log evidence, standard error)`.
    pub mc_evidence: Option<(f64, f64)>,
    pub d_m: usize,
    pub n: usize,
}

impl CriterionValue {
    pub fn new(model_id: impl Into<String>, elbo: f64, loglik_max: f64, d_m: usize, n: usize) -> Result<Self> {
        if d_m == 0 {
            return Err(usage("a candidate model needs at least one parameter"));
        }
        Ok(Self {
            model_id: model_id.into(),
            elbo,
            bic: bic(loglik_max, d_m, n)?,
            aic: aic(loglik_max, d_m),
            penalized_elbo: None,
            extended_bic: None,
            mc_evidence: None,
            d_m,
            n,
        })
    }

    /// Adds the prior-penalized criteria for model prior mass `π(M)`.
    pub fn with_model_prior(mut self, log_model_prior: f64) -> Self {
        let (o, bic_pi) = penalized_criteria(self.elbo, self.bic, log_model_prior);
        self.penalized_elbo = Some(o);
        self.extended_bic = Some(bic_pi);
        self
    }

    pub fn with_evidence(mut self, log_evidence: f64, stderr: f64) -> Self {
        self.mc_evidence = Some((log_evidence, stderr));
        self
    }

    pub fn value(&self, criterion: Criterion) -> Option<f64> {
        match criterion {
            Criterion::Elbo => Some(self.elbo),
            Criterion::Bic => Some(self.bic),
            Criterion::Aic => Some(self.aic),
            Criterion::PenalizedElbo => self.penalized_elbo,
            Criterion::ExtendedBic => self.extended_bic,
            Criterion::Evidence => self.mc_evidence.map(|(e, _)| e),
        }
    }
}

/// The best candidate under `criterion`: argmax for ELBO-type and evidence, argmin
/// for BIC-type; ties go to the smaller `d_M`, then the smaller `model_id`.
pub fn select(values: &[CriterionValue], criterion: Criterion) -> Result<&CriterionValue> {
    if values.is_empty() {
        return Err(usage("no candidate models to select from"));
    }
    let mut best: Option<(&CriterionValue, f64)> = None;
    for v in values {
        let raw =
            v.value(criterion).ok_or_else(|| usage(format!("candidate '{}' has no {criterion} value", v.model_id)))?;
        if raw.is_nan() {
            return Err(usage(format!("candidate '{}' has a NaN {criterion} value", v.model_id)));
        }
        let score = if criterion.maximize() { -raw } else { raw };
        let better = match best {
            None => true,
            Some((b, b_score)) => score < b_score || (score == b_score && (v.d_m, &v.model_id) < (b.d_m, &b.model_id)),
        };
        if better {
            best = Some((v, score));
        }
    }
    Ok(best.expect("non-empty candidate list").0)
}

/// Constants of the asymptotic expansions
/// `log p(Xⁿ) = ELBO + C* + o(1)` and `log p(Xⁿ) = −BIC/2 + C*_BIC + o(1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapConstants {
    /// `½ log det diag(V_c) / det V`.
    pub c_star: f64,
    /// `−½ log det V + (d/2) log 2π + log π(θ*)`.
    pub c_bic_star: f64,
    /// `C* − C*_BIC`, the limit of `−BIC/2 − ELBO`.
    pub c_tilde_star: f64,
    /// `½ log det blockdiag(V_c) / det V` for a block-structured family.
    pub c_block_star: Option<f64>,
    /// `C_b* − C*_BIC`, the limit of `−BIC/2 − ELBO` for the block family.
    pub c_tilde_block_star: Option<f64>,
    /// `½ log det diag(V) / det V`, defined when there are no latent variables.
    pub c_nolatent_star: Option<f64>,
}

pub fn gap_constants(bundle: &FisherBundle, block_sizes: Option<&[usize]>) -> Result<GapConstants> {
    let d = bundle.dim() as f64;
    let log_det_v = linalg::log_det_spd(&bundle.v)?;
    let log_det_diag_vc = log_det_positive_diagonal(&bundle.s_c)?;
    let c_star = 0.5 * (log_det_diag_vc - log_det_v);
    let c_bic_star = -0.5 * log_det_v + 0.5 * d * (2.0 * PI).ln() + bundle.prior_log_density_at_theta_star;
    let c_block_star = match block_sizes {
        Some(sizes) => {
            let blocks = linalg::block_diag_part(&bundle.v_c, sizes)?;
            Some(0.5 * (linalg::log_det_spd(&blocks)? - log_det_v))
        }
        None => None,
    };
    let c_nolatent_star =
        if bundle.has_latents() { None } else { Some(0.5 * (log_det_positive_diagonal(&bundle.s)? - log_det_v)) };
    Ok(GapConstants {
        c_star,
        c_bic_star,
        c_tilde_star: c_star - c_bic_star,
        c_block_star,
        c_tilde_block_star: c_block_star.map(|c| c - c_bic_star),
        c_nolatent_star,
    })
}

/// `C̃*` from its own formula `½ log det diag(V_c) − (d/2) log 2π − log π(θ*)`.
pub fn c_tilde_star_direct(bundle: &FisherBundle) -> Result<f64> {
    Ok(0.5 * log_det_positive_diagonal(&bundle.s_c)?
        - 0.5 * bundle.dim() as f64 * (2.0 * PI).ln()
        - bundle.prior_log_density_at_theta_star)
}

fn log_det_positive_diagonal(diag: &Vector) -> Result<f64> {
    if diag.iter().any(|v| !(*v > 0.0)) {
        return Err(crate::error::numeric("diagonal information entries must be positive"));
    }
    Ok(diag.iter().map(|v| v.ln()).sum())
}

/// Local contraction factor of the expected ELBO regret for one CAVI scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    pub scheme: ScheduleKind,
    pub gamma: f64,
    /// Per-update (sequential) or per-sweep (parallel) contraction factor.
    pub alpha: f64,
    pub rayleigh_min: f64,
    pub rayleigh_max: f64,
    pub latent: bool,
}

/// Contraction rates from a Fisher bundle; `latent` selects the complete-data
/// scaling `S_c` instead of `S`.
pub fn contraction_rates(
    bundle: &FisherBundle,
    gamma: f64,
    scheme: ScheduleKind,
    latent: bool,
    d: usize,
) -> Result<ContractionReport> {
    let s_c = latent.then_some(&bundle.s_c);
    contraction_rates_for(&bundle.v, s_c, gamma, scheme, d)
}

/// Contraction rates for information `V` with optional complete-data diagonal `S_c`.
///
/// The scheme's quotient `bᵀMb / bᵀVb` uses
/// `M = V S⁻¹ V` (sequential), `M = V S_c⁻¹(2S_c − γS)S_c⁻¹ V` (sequential with
/// latent variables), or `M = AᵀVA`, `A = I − γ S_c⁻¹ V` (parallel; `S_c = S`
/// without latent variables). The guarantee is `α = 1 − r_min γ(2 − γ)/d`,
/// `α = 1 − r_min γ/d`, or `α = r_max` respectively.
pub fn contraction_rates_for(
    v: &Matrix,
    s_c: Option<&Vector>,
    gamma: f64,
    scheme: ScheduleKind,
    d: usize,
) -> Result<ContractionReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(usage(format!("step size must lie in (0, 1], got {gamma}")));
    }
    if d == 0 || !v.is_square() || v.nrows() == 0 {
        return Err(usage("dimension must be positive and V square"));
    }
    let s = v.diagonal();
    let scaling = s_c.unwrap_or(&s);
    if scaling.len() != v.nrows() || scaling.iter().any(|x| !(*x > 0.0)) {
        return Err(usage("scaling diagonal must be positive with the dimension of V"));
    }
    let inv_scaling = Matrix::from_diagonal(&scaling.map(|x| 1.0 / x));
    let dim = d as f64;
    let latent = s_c.is_some();
    let numerator = match (scheme.is_sequential(), latent) {
        (true, false) => v * &inv_scaling * v,
        (true, true) => {
            let middle = Matrix::from_diagonal(&Vector::from_fn(v.nrows(), |j, _| {
                (2.0 * scaling[j] - gamma * s[j]) / (scaling[j] * scaling[j])
            }));
            v * middle * v
        }
        (false, _) => {
            let a = Matrix::identity(v.nrows(), v.nrows()) - &inv_scaling * v * gamma;
            a.transpose() * v * a
        }
    };
    let (rayleigh_min, rayleigh_max) = linalg::generalized_rayleigh_extremes(&numerator, v)?;
    let alpha = match (scheme.is_sequential(), latent) {
        (true, false) => 1.0 - rayleigh_min * gamma * (2.0 - gamma) / dim,
        (true, true) => 1.0 - rayleigh_min * gamma / dim,
        (false, _) => rayleigh_max,
    };
    Ok(ContractionReport { scheme, gamma, alpha, rayleigh_min, rayleigh_max, latent })
}

/// `θ*` approximated by maximum likelihood on a large sample from the data-generating law.
#[derive(Debug, Clone, PartialEq)]
pub struct KlProjection {
    pub theta: Vector,
    /// Average log-likelihood per sample at `θ*`, i.e. `−KL(P₀‖P_θ*)` up to the entropy of `P₀`.
    pub mean_log_likelihood: f64,
    pub iterations: usize,
    pub samples: usize,
}

/// `θ* = argmax_θ E_{P₀} log p(X | θ)`, replacing `P₀` by `samples` draws.
///
/// `draw(rng, samples)` simulates from the data-generating law; `fit` maximizes the
/// candidate's likelihood on that sample.
pub fn kl_projection_theta_star<D, Draw, Fit>(draw: Draw, fit: Fit, samples: usize, seed: u64) -> Result<KlProjection>
where
    Draw: FnOnce(&mut ChaCha8Rng, usize) -> Result<D>,
    Fit: FnOnce(&D) -> Result<MleFit>,
{
    if samples == 0 {
        return Err(usage("KL projection needs at least one sample"));
    }
    let mut rng = stream_rng(seed, 0);
    let data = draw(&mut rng, samples)?;
    let fitted = fit(&data)?;
    Ok(KlProjection {
        mean_log_likelihood: fitted.log_likelihood / samples as f64,
        theta: fitted.theta,
        iterations: fitted.iterations,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FisherSource;
    use approx::assert_relative_eq;

    fn candidate(id: &str, elbo: f64, loglik: f64, d: usize) -> CriterionValue {
        CriterionValue::new(id, elbo, loglik, d, 100).unwrap()
    }

    #[test]
    fn information_criteria_by_hand() {
        assert_relative_eq!(bic(-100.0, 3, 100).unwrap(), 200.0 + 3.0 * 100f64.ln(), epsilon = 1e-12);
        assert_eq!(bic(0.0, 1, 1).unwrap(), 0.0);
        assert!(bic(0.0, 1, 0).is_err());
        assert_eq!(aic(-100.0, 3), 206.0);
        assert_eq!(aic(0.0, 0), 0.0);
        assert_eq!(penalized_criteria(-5.0, 12.0, 0.0), (-5.0, 12.0));
        // π(M) ∝ p^{−κ d}, κ = 1, p = 100, d = 2.
        let (_, extended) = penalized_criteria(0.0, 0.0, -2.0 * 100f64.ln());
        assert_relative_eq!(extended, 2.0 * 2.0 * 100f64.ln(), epsilon = 1e-12);
        assert_eq!(elbo_factor(-3.0, -3.0), 0.0);
    }

    #[test]
    fn selection_tie_breaks_towards_smaller_models() {
        let values = vec![candidate("b", -10.0, -50.0, 3), candidate("a", -11.0, -50.0, 3)];
        assert_eq!(select(&values, Criterion::Elbo).unwrap().model_id, "b");
        assert_eq!(select(&values, Criterion::Bic).unwrap().model_id, "a");
        let mut tied = vec![candidate("x", 0.0, 0.0, 5), candidate("y", 0.0, 0.0, 3)];
        tied[0].bic = 10.0;
        tied[1].bic = 10.0;
        assert_eq!(select(&tied, Criterion::Bic).unwrap().model_id, "y");
        assert!(select(&tied, Criterion::Evidence).is_err());
        assert!(select(&[], Criterion::Elbo).is_err());
    }

    #[test]
    fn criterion_names_round_trip() {
        for c in Criterion::ALL {
            assert_eq!(c.as_str().parse::<Criterion>().unwrap(), c);
        }
        assert!("waic".parse::<Criterion>().is_err());
    }

    #[test]
    fn diagonal_information_has_no_mean_field_gap() {
        let v = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.5]));
        let bundle =
            FisherBundle::from_parts(v.clone(), v, Vector::zeros(2), -1.0, FisherSource::Analytic, 0.0).unwrap();
        let gaps = gap_constants(&bundle, Some(&[2])).unwrap();
        assert_relative_eq!(gaps.c_star, 0.0, epsilon = 1e-14);
        assert_relative_eq!(gaps.c_nolatent_star.unwrap(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(gaps.c_tilde_star, c_tilde_star_direct(&bundle).unwrap(), epsilon = 1e-12);
        assert_relative_eq!(gaps.c_block_star.unwrap(), gaps.c_nolatent_star.unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn counterexample_parallel_rate() {
        let v = Matrix::from_element(3, 3, 2.0 / 3.0) + Matrix::identity(3, 3) / 3.0;
        let report = contraction_rates_for(&v, None, 1.0, ScheduleKind::Parallel, 3).unwrap();
        assert_relative_eq!(report.alpha, 16.0 / 9.0, epsilon = 1e-12);
        assert_relative_eq!(report.rayleigh_min, 4.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_sequential_rate() {
        let v = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 4.0, 9.0]));
        for gamma in [0.3, 1.0] {
            let report = contraction_rates_for(&v, None, gamma, ScheduleKind::SequentialRandomized, 3).unwrap();
            assert_relative_eq!(report.rayleigh_min, 1.0, epsilon = 1e-12);
            assert_relative_eq!(report.rayleigh_max, 1.0, epsilon = 1e-12);
            assert_relative_eq!(report.alpha, 1.0 - gamma * (2.0 - gamma) / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn latent_scaling_equal_to_diagonal_matches_plain_rate() {
        let v = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = v.diagonal();
        let plain = contraction_rates_for(&v, None, 0.7, ScheduleKind::SequentialSystematic, 2).unwrap();
        let latent = contraction_rates_for(&v, Some(&s), 0.7, ScheduleKind::SequentialSystematic, 2).unwrap();
        assert_relative_eq!(plain.alpha, latent.alpha, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_step_size() {
        let v = Matrix::identity(2, 2);
        assert!(contraction_rates_for(&v, None, 0.0, ScheduleKind::Parallel, 2).is_err());
        assert!(contraction_rates_for(&v, None, 1.5, ScheduleKind::Parallel, 2).is_err());
    }
}
