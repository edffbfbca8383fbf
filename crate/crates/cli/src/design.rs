//! Seeded synthetic data generators for the four model families.
//!
//! Every generator draws from its own ChaCha stream of the design seed, so a
//! `(design, seed)` pair always yields the same dataset.

use meanfield::error::Error;
use meanfield::linalg::{self, Matrix, Vector};
use meanfield::par::stream_rng;
use meanfield::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

/// `Xᵢ ~ N(mean, sd²)` i.i.d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalDesign {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl NormalDesign {
    /// `N(100, 100²)`, the location-scale benchmark.
    pub fn benchmark(n: usize) -> Self {
        Self { n, mean: 100.0, sd: 100.0 }
    }

    pub fn generate(&self, seed: u64) -> Result<Vec<f64>> {
        let dist = Normal::new(self.mean, self.sd).map_err(|e| usage(format!("invalid normal design: {e}")))?;
        let mut rng = stream_rng(seed, 0);
        Ok((0..self.n).map(|_| dist.sample(&mut rng)).collect())
    }
}

/// Equal-weight mixture of `N(cₖ, 1)` with centers `Δ·(k − (K−1)/2)`, i.e. `Δ·(−1, 0, 1)`
/// for three components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmDesign {
    pub n: usize,
    pub k: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmData {
    pub x: Vec<f64>,
    pub labels: Vec<usize>,
}

impl GmmDesign {
    pub fn centers(&self) -> Vec<f64> {
        let mid = (self.k as f64 - 1.0) / 2.0;
        (0..self.k).map(|k| self.delta * (k as f64 - mid)).collect()
    }

    pub fn generate(&self, seed: u64) -> Result<GmmData> {
        if self.k == 0 {
            return Err(usage("mixture design needs at least one component"));
        }
        let centers = self.centers();
        let mut rng = stream_rng(seed, 0);
        let mut x = Vec::with_capacity(self.n);
        let mut labels = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let k = rng.random_range(0..self.k);
            let z: f64 = StandardNormal.sample(&mut rng);
            x.push(centers[k] + z);
            labels.push(k);
        }
        Ok(GmmData { x, labels })
    }
}

/// Feature covariance of the probit designs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureCovariance {
    /// `σᵢⱼ = r^|i−j|`.
    Ar1(f64),
    /// `σᵢⱼ = ρ + (1 − ρ)·1(i = j)`.
    Equicorrelated(f64),
}

impl FeatureCovariance {
    pub fn matrix(&self, p: usize) -> Matrix {
        match *self {
            FeatureCovariance::Ar1(r) => Matrix::from_fn(p, p, |i, j| r.powi(i.abs_diff(j) as i32)),
            FeatureCovariance::Equicorrelated(rho) => Matrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho }),
        }
    }

    fn validate(&self) -> Result<()> {
        let (value, name) = match *self {
            FeatureCovariance::Ar1(r) => (r, "AR(1) correlation"),
            FeatureCovariance::Equicorrelated(rho) => (rho, "equicorrelation"),
        };
        if !(0.0..1.0).contains(&value) {
            return Err(usage(format!("{name} must lie in [0, 1), got {value}")));
        }
        Ok(())
    }
}

/// `Yᵢ ~ Ber(Φ(Xᵢᵀβ))` with `Xᵢ ~ N(0, Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbitDesign {
    pub n: usize,
    pub beta: Vector,
    pub covariance: FeatureCovariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitData {
    pub x: Matrix,
    pub y: Vec<u8>,
}

impl ProbitDesign {
    /// `βⱼ = q^{j−1}·1(j ≤ nonzero)`, `j = 1..p`, AR(1) features with correlation `r`.
    pub fn sparse(n: usize, p: usize, q: f64, nonzero: usize, r: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(usage(format!("decay q must lie in (0, 1], got {q}")));
        }
        let beta = Vector::from_fn(p, |j, _| if j < nonzero { q.powi(j as i32) } else { 0.0 });
        Self::new(n, beta, FeatureCovariance::Ar1(r))
    }

    /// `βⱼ = q^j`, `j = 1..p` (every feature relevant, geometrically weaker).
    pub fn decaying(n: usize, p: usize, q: f64, r: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(usage(format!("decay q must lie in (0, 1], got {q}")));
        }
        Self::new(n, Vector::from_fn(p, |j, _| q.powi(j as i32 + 1)), FeatureCovariance::Ar1(r))
    }

    pub fn new(n: usize, beta: Vector, covariance: FeatureCovariance) -> Result<Self> {
        if beta.is_empty() {
            return Err(usage("probit design needs at least one feature"));
        }
        covariance.validate()?;
        Ok(Self { n, beta, covariance })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn feature_covariance(&self) -> Matrix {
        self.covariance.matrix(self.p())
    }

    pub fn generate(&self, seed: u64) -> Result<ProbitData> {
        self.sample(&mut stream_rng(seed, 0), self.n)
    }

    /// `n` draws from the design using an external RNG.
    pub fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<ProbitData> {
        let p = self.p();
        let chol = linalg::cholesky(&self.feature_covariance())?;
        let l = chol.l();
        let mut z = Matrix::zeros(n, p);
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let x = z * l.transpose();
        let eta = &x * &self.beta;
        let y = eta
            .iter()
            .map(|&e| {
                let noise: f64 = rng.sample(StandardNormal);
                u8::from(e + noise >= 0.0)
            })
            .collect();
        Ok(ProbitData { x, y })
    }
}

/// `K` equal-size communities with `B_aa = within` and `B_ab ~ U(0, between_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmDesign {
    pub n: usize,
    pub k: usize,
    pub within: f64,
    pub between_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbmData {
    pub adjacency: Vec<Vec<u8>>,
    pub labels: Vec<usize>,
    pub connectivity: Matrix,
}

impl SbmDesign {
    /// Within-community probability 0.6 and between-community probabilities from `U(0, 0.4)`.
    pub fn benchmark(n: usize, k: usize) -> Self {
        Self { n, k, within: 0.6, between_max: 0.4 }
    }

    pub fn generate(&self, seed: u64) -> Result<SbmData> {
        if self.k == 0 || self.n < self.k {
            return Err(usage("block design needs 1 ≤ K ≤ n"));
        }
        if !(0.0..=1.0).contains(&self.within) || !(0.0..=1.0).contains(&self.between_max) {
            return Err(usage("connection probabilities must lie in [0, 1]"));
        }
        let mut rng = stream_rng(seed, 0);
        let mut connectivity = Matrix::from_element(self.k, self.k, self.within);
        for a in 0..self.k {
            for b in (a + 1)..self.k {
                let v = self.between_max * rng.random::<f64>();
                connectivity[(a, b)] = v;
                connectivity[(b, a)] = v;
            }
        }
        // Contiguous equal-size blocks (sizes differ by at most one).
        let labels: Vec<usize> = (0..self.n).map(|i| i * self.k / self.n).collect();
        let mut adjacency = vec![vec![0u8; self.n]; self.n];
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let edge = u8::from(rng.random::<f64>() < connectivity[(labels[i], labels[j])]);
                adjacency[i][j] = edge;
                adjacency[j][i] = edge;
            }
        }
        Ok(SbmData { adjacency, labels, connectivity })
    }
}

/// Fraction of nodes whose label matches the truth under the best relabelling
/// (exhaustive over permutations; intended for `K ≤ 8`).
pub fn permutation_accuracy(truth: &[usize], estimate: &[usize], k: usize) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let hits = truth.iter().zip(estimate).filter(|(&t, &e)| e < k && p[e] == t).count();
        best = best.max(hits);
    });
    best as f64 / truth.len() as f64
}

fn permute(perm: &mut Vec<usize>, i: usize, visit: &mut dyn FnMut(&[usize])) {
    if i == perm.len() {
        visit(perm);
        return;
    }
    for j in i..perm.len() {
        perm.swap(i, j);
        permute(perm, i + 1, visit);
        perm.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_component_centers() {
        let design = GmmDesign { n: 10, k: 3, delta: 2.5 };
        assert_eq!(design.centers(), vec![-2.5, 0.0, 2.5]);
        let zero = GmmDesign { n: 10, k: 4, delta: 0.0 };
        assert!(zero.centers().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn sparse_probit_coefficients() {
        let design = ProbitDesign::sparse(10, 7, 0.8, 5, 0.5).unwrap();
        let expected = [1.0, 0.8, 0.64, 0.512, 0.4096, 0.0, 0.0];
        for (b, e) in design.beta.iter().zip(expected) {
            assert!((b - e).abs() < 1e-15);
        }
        assert!(ProbitDesign::sparse(10, 3, 0.8, 2, 1.0).is_err());
    }

    #[test]
    fn generators_are_reproducible() {
        let design = ProbitDesign::decaying(50, 4, 0.8, 0.2).unwrap();
        assert_eq!(design.generate(9).unwrap(), design.generate(9).unwrap());
        assert_ne!(design.generate(9).unwrap(), design.generate(10).unwrap());
        let sbm = SbmDesign::benchmark(20, 4);
        assert_eq!(sbm.generate(1).unwrap(), sbm.generate(1).unwrap());
    }

    #[test]
    fn sbm_structure() {
        let data = SbmDesign::benchmark(100, 5).generate(3).unwrap();
        let mut sizes = [0usize; 5];
        data.labels.iter().for_each(|&l| sizes[l] += 1);
        assert_eq!(sizes, [20; 5]);
        for i in 0..100 {
            assert_eq!(data.adjacency[i][i], 0);
            for j in 0..100 {
                assert_eq!(data.adjacency[i][j], data.adjacency[j][i]);
            }
        }
        for a in 0..5 {
            assert_eq!(data.connectivity[(a, a)], 0.6);
        }
    }

    #[test]
    fn accuracy_ignores_label_names() {
        assert_eq!(permutation_accuracy(&[0, 0, 1, 1, 2], &[2, 2, 0, 0, 1], 3), 1.0);
        assert_eq!(permutation_accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1], 2), 0.75);
    }
}
