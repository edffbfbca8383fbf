//! Independent reference computations used by the acceptance report and the
//! integration tests: generic ELBOs `E_q[log p(data, latents, θ)] − E_q[log q]`
//! by exhaustive enumeration of discrete latents and numerical quadrature over
//! continuous factors, written directly from each model's joint density.
//!
//! Nothing here calls the library's ELBO, KL or special-function code; densities
//! are normalized numerically wherever possible.

#![allow(dead_code)]

use std::f64::consts::PI;

use meanfield::factors::{Factor, MeanFieldState};
use meanfield::linalg::{Matrix, Vector};
use meanfield::special::Side;

/// A one-dimensional density tabulated on a uniform trapezoid grid in a
/// transformed variable `u`, with `x = g(u)`. Log-densities are normalized
/// numerically, so no closed-form normalizer enters any expectation.
pub struct Density1d {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    /// Probability mass carried by each node; sums to one.
    pub mass: Vec<f64>,
    /// `log q(x)` at each node (density with respect to `x`).
    pub log_q: Vec<f64>,
}

impl Density1d {
    /// `log_density(u)` is the unnormalized log-density in `x` evaluated at
    /// `x = g(u)`; `log_jacobian(u) = log |g'(u)|`.
    pub fn new(
        lo: f64,
        hi: f64,
        steps: usize,
        g: impl Fn(f64) -> f64,
        log_jacobian: impl Fn(f64) -> f64,
        log_density: impl Fn(f64) -> f64,
    ) -> Self {
        let h = (hi - lo) / steps as f64;
        let u: Vec<f64> = (0..=steps).map(|i| lo + i as f64 * h).collect();
        let weight = |i: usize| if i == 0 || i == steps { 0.5 * h } else { h };
        let logs: Vec<f64> = u.iter().map(|&v| log_density(v)).collect();
        let with_jac: Vec<f64> =
            u.iter().zip(&logs).enumerate().map(|(i, (&v, l))| l + log_jacobian(v) + weight(i).ln()).collect();
        let peak = with_jac.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = peak + with_jac.iter().map(|l| (l - peak).exp()).sum::<f64>().ln();
        Self {
            x: u.iter().map(|&v| g(v)).collect(),
            mass: with_jac.iter().map(|l| (l - log_z).exp()).collect(),
            log_q: logs.iter().map(|l| l - log_z).collect(),
            u,
        }
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.x.iter().zip(&self.mass).filter(|(_, &m)| m > 0.0).map(|(&x, &m)| m * f(x)).sum()
    }

    /// Expectation of a function of the grid variable `u`.
    pub fn expect_u(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.u.iter().zip(&self.mass).filter(|(_, &m)| m > 0.0).map(|(&u, &m)| m * f(u)).sum()
    }

    /// Differential entropy `−E log q(x)`.
    pub fn entropy(&self) -> f64 {
        -self.mass.iter().zip(&self.log_q).filter(|(&m, _)| m > 0.0).map(|(m, l)| m * l).sum::<f64>()
    }
}

fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

/// `N(mean, var)` on a ±14 sd grid.
pub fn gaussian_density(mean: f64, var: f64) -> Density1d {
    let sd = var.sqrt();
    Density1d::new(mean - 14.0 * sd, mean + 14.0 * sd, 1400, |x| x, |_| 0.0, |x| ln_normal(x, mean, var))
}

/// `IG(shape, rate)` on a grid in `log x`.
pub fn inverse_gamma_density(shape: f64, rate: f64) -> Density1d {
    let center = (rate / shape).ln();
    let (lo, hi) = (center - 8.0 - 12.0 / shape.sqrt(), center + 60.0 / shape);
    Density1d::new(lo, hi, 40_000, f64::exp, |u| u, |u| -(shape + 1.0) * u - rate * (-u).exp())
}

/// `Beta(α, β)` on a logit grid.
pub fn beta_density(alpha: f64, beta: f64) -> Density1d {
    Density1d::new(
        -60.0,
        60.0,
        60_000,
        |u| 1.0 / (1.0 + (-u).exp()),
        |u| log_sigmoid(u) + log_sigmoid(-u),
        |u| (alpha - 1.0) * log_sigmoid(u) + (beta - 1.0) * log_sigmoid(-u),
    )
}

/// `log σ(u) = −log(1 + e^{−u})`, stable for either sign.
pub fn log_sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

/// Unit-scale Gaussian at `location` truncated to `side`, on a grid in `log |z|`.
pub fn truncated_density(location: f64, side: Side) -> Density1d {
    let s = side.sign();
    let reach = (s * location).max(0.0) + 16.0;
    Density1d::new(
        -45.0,
        reach.ln(),
        40_000,
        move |v| s * v.exp(),
        |v| v,
        move |v| ln_normal(s * v.exp(), location, 1.0),
    )
}

/// `ln Γ(x)` from an independent implementation, used only for prior normalizers.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Location-scale normal: `Xᵢ ~ N(μ, σ²)`, `μ ~ N(μ₀, σ₀²)`, `σ² ~ IG(a, b)`.
pub fn normal_generic_elbo(data: &[f64], mu0: f64, sigma0_sq: f64, a: f64, b: f64, state: &MeanFieldState) -> f64 {
    let qm = state.parameter(0).as_gaussian().expect("Gaussian factor");
    let qv = state.parameter(1).as_inverse_gamma().expect("inverse-gamma factor");
    let mu = gaussian_density(qm.mean(), qm.variance());
    let var = inverse_gamma_density(qv.shape(), qv.rate());
    let ln_prior_var = |v: f64| a * b.ln() - ln_gamma(a) - (a + 1.0) * v.ln() - b / v;
    let mut expected_log_joint = 0.0;
    for (&m, &wm) in mu.x.iter().zip(&mu.mass) {
        if wm == 0.0 {
            continue;
        }
        let inner: f64 = var
            .x
            .iter()
            .zip(&var.mass)
            .filter(|(_, &wv)| wv > 0.0)
            .map(|(&v, &wv)| wv * (data.iter().map(|&x| ln_normal(x, m, v)).sum::<f64>() + ln_prior_var(v)))
            .sum();
        expected_log_joint += wm * (inner + ln_normal(m, mu0, sigma0_sq));
    }
    expected_log_joint + mu.entropy() + var.entropy()
}

/// Visits every assignment in `{0..k}ⁿ` with its probability `∏ᵢ φᵢ,zᵢ`.
pub fn enumerate_assignments(phi: &[Vec<f64>], k: usize, mut visit: impl FnMut(&[usize], f64)) {
    let n = phi.len();
    let mut z = vec![0usize; n];
    loop {
        let w: f64 = z.iter().enumerate().map(|(i, &zi)| phi[i][zi]).product();
        visit(&z, w);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            z[i] += 1;
            if z[i] < k {
                break;
            }
            z[i] = 0;
            i += 1;
        }
    }
}

fn categorical_rows(state: &MeanFieldState) -> Vec<Vec<f64>> {
    state
        .latent_factors
        .iter()
        .map(|f| f.as_categorical().expect("categorical factor").probabilities().to_vec())
        .collect()
}

/// Equal-weight mixture: `Xᵢ | cᵢ, μ ~ N(μ_cᵢ, 1)`, `cᵢ ~ U{1..K}`, `μₖ ~ N(0, σ²)`.
pub fn gmm_generic_elbo(data: &[f64], k: usize, prior_sd: f64, state: &MeanFieldState) -> f64 {
    let centers: Vec<Density1d> = (0..k)
        .map(|j| {
            let g = state.parameter(j).as_gaussian().expect("Gaussian factor");
            gaussian_density(g.mean(), g.variance())
        })
        .collect();
    let phi = categorical_rows(state);
    // e[i][j] = E_q log N(Xᵢ | μⱼ, 1)
    let e: Vec<Vec<f64>> =
        data.iter().map(|&x| centers.iter().map(|c| c.expect(|m| ln_normal(x, m, 1.0))).collect()).collect();
    let mut total = 0.0;
    enumerate_assignments(&phi, k, |z, w| {
        if w > 0.0 {
            let ll: f64 = z.iter().enumerate().map(|(i, &zi)| e[i][zi]).sum();
            total += w * (ll - data.len() as f64 * (k as f64).ln() - w.ln());
        }
    });
    for c in &centers {
        total += c.expect(|m| ln_normal(m, 0.0, prior_sd * prior_sd)) + c.entropy();
    }
    total
}

/// Probit with augmentation: `Zᵢ | β ~ N(Xᵢᵀβ, 1)`, `Yᵢ = 1(Zᵢ > 0)`, `β ~ N(0, Σ₀)`.
/// `q(β)` is one multivariate Gaussian (block) or independent Gaussians.
pub fn probit_generic_elbo(x: &Matrix, prior_cov: &Matrix, state: &MeanFieldState) -> f64 {
    let d = x.ncols();
    let (mean, cov) = match state.parameter(0) {
        Factor::MultivariateGaussian(g) => (g.mean().clone(), g.covariance().clone()),
        _ => {
            let factors: Vec<_> =
                (0..d).map(|j| state.parameter(j).as_gaussian().expect("Gaussian factor").clone()).collect();
            (
                Vector::from_iterator(d, factors.iter().map(|f| f.mean())),
                Matrix::from_diagonal(&Vector::from_iterator(d, factors.iter().map(|f| f.variance()))),
            )
        }
    };
    let mut total = 0.0;
    for (i, f) in state.latent_factors.iter().enumerate() {
        let t = f.as_truncated_gaussian().expect("truncated Gaussian factor");
        let q = truncated_density(t.location(), t.side());
        let (ez, ez2) = (q.expect(|z| z), q.expect(|z| z * z));
        let xi = x.row(i).transpose();
        let eta = xi.dot(&mean);
        let spread = xi.dot(&(&cov * &xi));
        total += -0.5 * (2.0 * PI).ln() - 0.5 * (ez2 - 2.0 * ez * eta + eta * eta + spread) + q.entropy();
    }
    let prior_chol = prior_cov.clone().cholesky().expect("positive definite prior");
    let prior_precision = prior_chol.inverse();
    let log_det_prior = 2.0 * prior_chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    total += -0.5 * d as f64 * (2.0 * PI).ln()
        - 0.5 * log_det_prior
        - 0.5 * (mean.dot(&(&prior_precision * &mean)) + (&prior_precision * &cov).trace());
    let log_det_q =
        2.0 * cov.cholesky().expect("positive definite q").l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    total + 0.5 * d as f64 * (2.0 * PI * std::f64::consts::E).ln() + 0.5 * log_det_q
}

/// Block model: `A_ij | Z, B ~ Ber(B_{ZᵢZⱼ})` for `i < j`, `B_ab ~ Beta(α⁰, β⁰)` for
/// `a ≤ b` (row-major pair order), `Zᵢ ~ Categorical(π⁰ᵢ)`.
pub fn sbm_generic_elbo(
    adjacency: &[Vec<u8>],
    k: usize,
    prior_alpha: f64,
    prior_beta: f64,
    prior_pi: &[Vec<f64>],
    state: &MeanFieldState,
) -> f64 {
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect();
    let mut log_b = Matrix::zeros(k, k);
    let mut log_nb = Matrix::zeros(k, k);
    let mut total = 0.0;
    let ln_beta_fn = |a: f64, b: f64| ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    for (j, &(a, b)) in pairs.iter().enumerate() {
        let f = state.parameter(j).as_beta().expect("Beta factor");
        let q = beta_density(f.alpha(), f.beta());
        let (lb, lnb) = (q.expect_u(log_sigmoid), q.expect_u(|u| log_sigmoid(-u)));
        for (x, y) in [(a, b), (b, a)] {
            log_b[(x, y)] = lb;
            log_nb[(x, y)] = lnb;
        }
        total +=
            (prior_alpha - 1.0) * lb + (prior_beta - 1.0) * lnb - ln_beta_fn(prior_alpha, prior_beta) + q.entropy();
    }
    let phi = categorical_rows(state);
    let n = adjacency.len();
    enumerate_assignments(&phi, k, |z, w| {
        if w > 0.0 {
            let mut ll = 0.0;
            for i in 0..n {
                ll += prior_pi[i][z[i]].ln();
                for j in (i + 1)..n {
                    let (a, b) = (z[i], z[j]);
                    ll += if adjacency[i][j] == 1 { log_b[(a, b)] } else { log_nb[(a, b)] };
                }
            }
            total += w * (ll - w.ln());
        }
    });
    total
}

/// Exact log evidence of the location-scale normal model: the mean integrated
/// analytically for each `σ²`, then `σ²` integrated numerically on a log grid.
pub fn normal_log_evidence(data: &[f64], mu0: f64, sigma0_sq: f64, a: f64, b: f64) -> f64 {
    let n = data.len() as f64;
    let sum: f64 = data.iter().sum();
    let sum_sq: f64 = data.iter().map(|x| x * x).sum();
    // log ∫ Π N(xᵢ | μ, v) N(μ | μ₀, σ₀²) dμ
    let marginal = |v: f64| {
        let precision = n / v + 1.0 / sigma0_sq;
        let shift = sum / v + mu0 / sigma0_sq;
        -0.5 * n * (2.0 * PI * v).ln()
            - 0.5 * (sigma0_sq * precision).ln()
            - 0.5 * sum_sq / v
            - 0.5 * mu0 * mu0 / sigma0_sq
            + 0.5 * shift * shift / precision
    };
    let ln_prior = |v: f64| a * b.ln() - ln_gamma(a) - (a + 1.0) * v.ln() - b / v;
    // Trapezoid in u = log v: ∫ f(v) dv = ∫ f(eᵘ) eᵘ du.
    let (lo, hi, steps) = (-40.0, 60.0, 200_000);
    let h = (hi - lo) / steps as f64;
    let logs: Vec<f64> = (0..=steps)
        .map(|i| {
            let u = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 * h } else { h };
            w.ln() + u + marginal(u.exp()) + ln_prior(u.exp())
        })
        .collect();
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    peak + logs.iter().map(|l| (l - peak).exp()).sum::<f64>().ln()
}
