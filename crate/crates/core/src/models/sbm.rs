//! Stochastic block model with `K` communities:
//! `A_ij | Z, B ~ Ber(B_{Z_i Z_j})` for `i < j`, `B_ab ~ Beta(α⁰_ab, β⁰_ab)` for
//! `a ≤ b`, `Z_i ~ Categorical(π⁰_i)`.
//!
//! Variational family `∏_{a≤b} Beta(α_ab, β_ab) ∏ᵢ Categorical(πᵢ)`. Parameter
//! blocks are the upper-triangle pairs `(a, b)` in row-major order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaDistribution, Distribution};

use super::{EvidenceModel, MleFit};
use crate::engine::{LatentMode, ModelSpec};
use crate::error::{numeric, usage, Error, Result};
use crate::factors::{factor_kl, BetaFactor, CategoricalFactor, Factor, MeanFieldState};
use crate::linalg::{Matrix, Vector};
use crate::par::stream_rng;
use crate::special::{digamma, ln_beta, log_sum_exp, xlogx};

/// Largest graph for which latent assignments are summed exactly.
pub const MAX_EXACT_NODES: usize = 12;
/// Largest community count for which latent assignments are summed exactly.
pub const MAX_EXACT_COMMUNITIES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SbmPrior {
    /// `K×K` symmetric Beta shape parameters (only `a ≤ b` is used).
    pub alpha: Matrix,
    pub beta: Matrix,
    /// `n` rows of community prior probabilities.
    pub pi: Vec<Vec<f64>>,
}

impl SbmPrior {
    /// `B_ab ~ Beta(1, 1)`, `Zᵢ ~ Categorical(1/K, …, 1/K)`.
    pub fn uniform(n: usize, k: usize) -> Self {
        Self {
            alpha: Matrix::from_element(k, k, 1.0),
            beta: Matrix::from_element(k, k, 1.0),
            pi: vec![vec![1.0 / k as f64; k]; n],
        }
    }

    fn validate(&self, n: usize, k: usize) -> Result<()> {
        if self.alpha.shape() != (k, k) || self.beta.shape() != (k, k) {
            return Err(usage(format!("Beta hyperparameters must be {k}x{k}")));
        }
        if self.alpha.iter().chain(self.beta.iter()).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(usage("Beta hyperparameters must be positive"));
        }
        if self.pi.len() != n {
            return Err(usage(format!("need {n} prior community rows, got {}", self.pi.len())));
        }
        for row in &self.pi {
            let total: f64 = row.iter().sum();
            if row.len() != k || row.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(usage("prior community rows must be probability vectors of length K"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SbmModel {
    adjacency: Vec<Vec<u8>>,
    neighbors: Vec<Vec<usize>>,
    k: usize,
    prior: SbmPrior,
    pairs: Vec<(usize, usize)>,
}

/// Sufficient statistics of the assignment rows: `edge[a][b] = Σ_{i≠j} π_ia π_jb A_ij`
/// and `all[a][b] = Σ_{i≠j} π_ia π_jb`.
struct PairStatistics {
    edge: Matrix,
    all: Matrix,
}

impl SbmModel {
    pub fn new(adjacency: Vec<Vec<u8>>, k: usize, prior: SbmPrior) -> Result<Self> {
        let n = adjacency.len();
        if k == 0 {
            return Err(usage("a block model needs at least one community"));
        }
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(usage("adjacency matrix must be square"));
            }
            if row[i] != 0 {
                return Err(usage("adjacency matrix must have a zero diagonal"));
            }
            for (j, &v) in row.iter().enumerate() {
                if v > 1 || adjacency[j][i] != v {
                    return Err(usage("adjacency matrix must be symmetric and binary"));
                }
            }
        }
        prior.validate(n, k)?;
        let neighbors = adjacency
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, &v)| v == 1).map(|(j, _)| j).collect())
            .collect();
        let pairs = (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect();
        Ok(Self { adjacency, neighbors, k, prior, pairs })
    }

    /// Uniform priors: `Beta(1, 1)` connectivities and equal community probabilities.
    pub fn with_uniform_prior(adjacency: Vec<Vec<u8>>, k: usize) -> Result<Self> {
        let n = adjacency.len();
        Self::new(adjacency, k, SbmPrior::uniform(n, k))
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn communities(&self) -> usize {
        self.k
    }

    pub fn adjacency(&self) -> &[Vec<u8>] {
        &self.adjacency
    }

    pub fn prior(&self) -> &SbmPrior {
        &self.prior
    }

    /// Block index of the unordered pair `{a, b}`.
    pub fn pair_index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        a * self.k - a * (a + 1) / 2 + b
    }

    /// Number of connectivity parameters `K(K+1)/2`.
    pub fn parameter_count(&self) -> usize {
        self.pairs.len()
    }

    /// Builds a state from `(α_ab, β_ab)` in block order and assignment rows.
    pub fn state(&self, connectivity: &[(f64, f64)], assignments: Vec<Vec<f64>>) -> Result<MeanFieldState> {
        if connectivity.len() != self.pairs.len() || assignments.len() != self.n() {
            return Err(usage("state dimensions do not match the block model"));
        }
        let params =
            connectivity.iter().map(|&(a, b)| Ok(Factor::Beta(BetaFactor::new(a, b)?))).collect::<Result<Vec<_>>>()?;
        let latents = assignments
            .into_iter()
            .map(|row| Ok(Factor::Categorical(CategoricalFactor::new(row)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MeanFieldState::new(params, latents))
    }

    /// Connectivity factors at the prior and assignments at the prior.
    pub fn prior_state(&self) -> Result<MeanFieldState> {
        let connectivity: Vec<(f64, f64)> =
            self.pairs.iter().map(|&(a, b)| (self.prior.alpha[(a, b)], self.prior.beta[(a, b)])).collect();
        self.state(&connectivity, self.prior.pi.clone())
    }

    fn connectivity<'a>(&self, state: &'a MeanFieldState) -> Result<Vec<&'a BetaFactor>> {
        state.parameter_factors.iter().map(|f| f.as_beta()).collect()
    }

    fn assignments<'a>(&self, state: &'a MeanFieldState) -> Result<Vec<&'a [f64]>> {
        state.latent_factors.iter().map(|f| f.as_categorical().map(|c| c.probabilities())).collect()
    }

    /// `E_q[B_ab]` as a symmetric `K×K` matrix.
    pub fn connectivity_mean(&self, state: &MeanFieldState) -> Result<Matrix> {
        let factors = self.connectivity(state)?;
        Ok(Matrix::from_fn(self.k, self.k, |a, b| factors[self.pair_index(a, b)].mean()))
    }

    /// The optimal-ELBO closed form, evaluated directly over node pairs:
    ///
    /// ```text
    /// Σ_{a≤b}[log Beta(α,β)/Beta(α⁰,β⁰) − (α−α⁰)ψ(α) − (β−β⁰)ψ(β) + (α+β−α⁰−β⁰)ψ(α+β)]
    ///  + Σᵢ Σₐ πᵢₐ log(π⁰ᵢₐ/πᵢₐ)
    ///  + Σ_{i<j} Σ_{a,b} πᵢₐπⱼ_b (A_ij(ψ(α_ab) − ψ(β_ab)) + ψ(β_ab) − ψ(α_ab+β_ab))
    /// ```
    ///
    /// Every term is an exact expectation, so it agrees with [`ModelSpec::elbo`]
    /// for any state, not only at the optimum.
    pub fn printed_elbo(&self, state: &MeanFieldState) -> Result<f64> {
        let factors = self.connectivity(state)?;
        let pi = self.assignments(state)?;
        let mut total = 0.0;
        let mut slope = Matrix::zeros(self.k, self.k);
        let mut base = Matrix::zeros(self.k, self.k);
        for (f, &(a, b)) in factors.iter().zip(&self.pairs) {
            let (al, be) = (f.alpha(), f.beta());
            let (al0, be0) = (self.prior.alpha[(a, b)], self.prior.beta[(a, b)]);
            let (psi_a, psi_b, psi_ab) = (digamma(al)?, digamma(be)?, digamma(al + be)?);
            total += ln_beta(al, be) - ln_beta(al0, be0) - (al - al0) * psi_a - (be - be0) * psi_b
                + (al + be - al0 - be0) * psi_ab;
            for (x, y) in [(a, b), (b, a)] {
                slope[(x, y)] = psi_a - psi_b;
                base[(x, y)] = psi_b - psi_ab;
            }
        }
        for (row, prior_row) in pi.iter().zip(&self.prior.pi) {
            for (&p, &p0) in row.iter().zip(prior_row) {
                if p > 0.0 {
                    total += p * (p0 / p).ln();
                }
            }
        }
        let n = self.n();
        for i in 0..n {
            for j in (i + 1)..n {
                let a_ij = f64::from(self.adjacency[i][j]);
                for a in 0..self.k {
                    for b in 0..self.k {
                        total += pi[i][a] * pi[j][b] * (a_ij * slope[(a, b)] + base[(a, b)]);
                    }
                }
            }
        }
        Ok(total)
    }

    fn pair_statistics(&self, pi: &[&[f64]]) -> PairStatistics {
        let k = self.k;
        let mut edge = Matrix::zeros(k, k);
        let mut totals = vec![0.0; k];
        let mut self_products = Matrix::zeros(k, k);
        let mut neighbor_sum = vec![0.0; k];
        for (i, row) in pi.iter().enumerate() {
            neighbor_sum.iter_mut().for_each(|v| *v = 0.0);
            for &j in &self.neighbors[i] {
                for (s, p) in neighbor_sum.iter_mut().zip(pi[j].iter()) {
                    *s += p;
                }
            }
            for a in 0..k {
                totals[a] += row[a];
                for b in 0..k {
                    edge[(a, b)] += row[a] * neighbor_sum[b];
                    self_products[(a, b)] += row[a] * row[b];
                }
            }
        }
        let all = Matrix::from_fn(k, k, |a, b| totals[a] * totals[b] - self_products[(a, b)]);
        PairStatistics { edge, all }
    }

    /// Conjugate connectivity update for block `(a, b)`: ordered pairs `i ≠ j`
    /// when `a ≠ b`, unordered pairs `i < j` on the diagonal.
    fn connectivity_optimum(&self, stats: &PairStatistics, a: usize, b: usize) -> Result<BetaFactor> {
        let scale = if a == b { 0.5 } else { 1.0 };
        let edges = scale * stats.edge[(a, b)];
        let non_edges = (scale * stats.all[(a, b)] - edges).max(0.0);
        BetaFactor::new(self.prior.alpha[(a, b)] + edges, self.prior.beta[(a, b)] + non_edges)
    }

    /// `(E log B_ab, E log(1 − B_ab))` as symmetric matrices.
    fn expected_logs(&self, state: &MeanFieldState) -> Result<(Matrix, Matrix)> {
        let factors = self.connectivity(state)?;
        let log_b = Matrix::from_fn(self.k, self.k, |a, b| factors[self.pair_index(a, b)].mean_log());
        let log_nb = Matrix::from_fn(self.k, self.k, |a, b| factors[self.pair_index(a, b)].mean_log_complement());
        Ok((log_b, log_nb))
    }

    /// `πᵢ ∝ π⁰ᵢ exp{Σ_b Σ_{j≠i} π_jb (A_ij E log B_ab + (1 − A_ij) E log(1 − B_ab))}`,
    /// with `totals[b] = Σ_j π_jb` over all nodes (including `i`).
    fn assignment_optimum(
        &self,
        i: usize,
        pi: &[Vec<f64>],
        totals: &[f64],
        log_b: &Matrix,
        log_nb: &Matrix,
    ) -> Result<CategoricalFactor> {
        let k = self.k;
        let mut linked = vec![0.0; k];
        for &j in &self.neighbors[i] {
            for (s, p) in linked.iter_mut().zip(&pi[j]) {
                *s += p;
            }
        }
        let unlinked: Vec<f64> = (0..k).map(|b| (totals[b] - pi[i][b] - linked[b]).max(0.0)).collect();
        let weights = (0..k)
            .map(|a| {
                let prior = self.prior.pi[i][a];
                let field: f64 = (0..k).map(|b| linked[b] * log_b[(a, b)] + unlinked[b] * log_nb[(a, b)]).sum();
                if prior > 0.0 {
                    prior.ln() + field
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        CategoricalFactor::from_log_weights(weights)
    }

    /// MLE approximated by the variational mean: `B̂ = E_q[B]`, and the observed-data
    /// log-likelihood with each pair's assignments summed under `q`:
    /// `Σ_{i<j} log Σ_{a,b} π_ia π_jb B̂_ab^{A_ij} (1 − B̂_ab)^{1−A_ij}`.
    pub fn plug_in_mle(&self, state: &MeanFieldState) -> Result<MleFit> {
        let b_hat = self.connectivity_mean(state)?;
        let pi = self.assignments(state)?;
        let n = self.n();
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let edge = self.adjacency[i][j] == 1;
                let mut p = 0.0;
                for a in 0..self.k {
                    for b in 0..self.k {
                        let bab = b_hat[(a, b)];
                        p += pi[i][a] * pi[j][b] * if edge { bab } else { 1.0 - bab };
                    }
                }
                total += p.max(f64::MIN_POSITIVE).ln();
            }
        }
        let theta = Vector::from_iterator(self.pairs.len(), self.pairs.iter().map(|&(a, b)| b_hat[(a, b)]));
        Ok(MleFit { theta, log_likelihood: total, iterations: 0 })
    }

    fn check_exact_size(&self) -> Result<()> {
        if self.n() > MAX_EXACT_NODES || self.k > MAX_EXACT_COMMUNITIES {
            return Err(Error::Unavailable(format!(
                "exact latent summation limited to n ≤ {MAX_EXACT_NODES}, K ≤ {MAX_EXACT_COMMUNITIES} (got n = {}, K = {})",
                self.n(),
                self.k
            )));
        }
        Ok(())
    }

    /// `log p(A | B) = log Σ_Z ∏ᵢ π⁰_{i,Zᵢ} ∏_{i<j} B_{ZᵢZⱼ}^{A_ij}(1 − B_{ZᵢZⱼ})^{1−A_ij}`,
    /// summed exactly over all `Kⁿ` assignments.
    pub fn log_likelihood_given_connectivity(&self, b: &Matrix) -> Result<f64> {
        self.check_exact_size()?;
        let k = self.k;
        let log_edge = b.map(|v| v.ln());
        let log_non_edge = b.map(|v| (-v).ln_1p());
        let mut leaves = Vec::with_capacity(k.pow(self.n() as u32));
        let mut z = vec![0usize; self.n()];
        self.enumerate(0, 0.0, &mut z, &mut |_, prefix| leaves.push(prefix), &|i, a, z| {
            let mut term = self.prior.pi[i][a].ln();
            for (j, &c) in z[..i].iter().enumerate() {
                term += if self.adjacency[i][j] == 1 { log_edge[(a, c)] } else { log_non_edge[(a, c)] };
            }
            term
        });
        if leaves.is_empty() {
            return Ok(0.0);
        }
        log_sum_exp(&leaves)
    }

    /// Exact log evidence `log p(A)` with `B` integrated analytically:
    /// `Σ_Z p(Z) ∏_{a≤b} Beta(α⁰ + e_ab, β⁰ + m_ab − e_ab) / Beta(α⁰, β⁰)`, where
    /// `e_ab` and `m_ab` count edges and node pairs between communities.
    pub fn exact_log_evidence(&self) -> Result<f64> {
        self.check_exact_size()?;
        let n = self.n();
        let k = self.k;
        let mut leaves = Vec::new();
        let mut z = vec![0usize; n];
        self.enumerate(
            0,
            0.0,
            &mut z,
            &mut |z, prefix| {
                let mut edges = Matrix::zeros(k, k);
                let mut pairs = Matrix::zeros(k, k);
                for i in 0..n {
                    for j in (i + 1)..n {
                        let (a, b) = if z[i] <= z[j] { (z[i], z[j]) } else { (z[j], z[i]) };
                        pairs[(a, b)] += 1.0;
                        edges[(a, b)] += self.adjacency[i][j] as f64;
                    }
                }
                let mut value = prefix;
                for &(a, b) in &self.pairs {
                    let (a0, b0) = (self.prior.alpha[(a, b)], self.prior.beta[(a, b)]);
                    value += ln_beta(a0 + edges[(a, b)], b0 + pairs[(a, b)] - edges[(a, b)]) - ln_beta(a0, b0);
                }
                leaves.push(value);
            },
            &|i, a, _| self.prior.pi[i][a].ln(),
        );
        if leaves.is_empty() {
            return Ok(0.0);
        }
        log_sum_exp(&leaves)
    }

    /// Depth-first enumeration of assignments, accumulating `increment(i, a, z)`
    /// along the path and calling `leaf` on every complete assignment.
    fn enumerate(
        &self,
        i: usize,
        prefix: f64,
        z: &mut Vec<usize>,
        leaf: &mut dyn FnMut(&[usize], f64),
        increment: &dyn Fn(usize, usize, &[usize]) -> f64,
    ) {
        if i == z.len() {
            leaf(z, prefix);
            return;
        }
        for a in 0..self.k {
            let step = increment(i, a, z);
            if step == f64::NEG_INFINITY {
                continue;
            }
            z[i] = a;
            self.enumerate(i + 1, prefix + step, z, leaf, increment);
        }
    }

    /// Prior-plus-jitter assignment rows used to start CAVI.
    fn jittered_assignments(&self, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = stream_rng(seed, 1);
        self.prior
            .pi
            .iter()
            .map(|row| {
                let weights: Vec<f64> = row.iter().map(|&p| p * (0.5 + rng.random::<f64>())).collect();
                let total: f64 = weights.iter().sum();
                if !(total > 0.0) {
                    return Err(numeric("prior community row has no mass"));
                }
                Ok(weights.into_iter().map(|w| w / total).collect())
            })
            .collect()
    }
}

impl ModelSpec for SbmModel {
    fn parameter_blocks(&self) -> usize {
        self.pairs.len()
    }

    fn sample_size(&self) -> usize {
        self.n()
    }

    /// Assignments at the prior with a seeded multiplicative jitter; connectivities
    /// at their conjugate optimum given those assignments (with exchangeable priors,
    /// connectivities left at the prior would make the first assignment refresh
    /// erase the jitter).
    fn initial_state(&self, seed: u64) -> Result<MeanFieldState> {
        let assignments = self.jittered_assignments(seed)?;
        let rows: Vec<&[f64]> = assignments.iter().map(|r| r.as_slice()).collect();
        let stats = self.pair_statistics(&rows);
        let connectivity = self
            .pairs
            .iter()
            .map(|&(a, b)| self.connectivity_optimum(&stats, a, b).map(|f| (f.alpha(), f.beta())))
            .collect::<Result<Vec<_>>>()?;
        self.state(&connectivity, assignments)
    }

    fn parameter_optimum(&self, state: &MeanFieldState, j: usize) -> Result<Factor> {
        let &(a, b) = self.pairs.get(j).ok_or_else(|| usage(format!("block {j} out of range")))?;
        let pi = self.assignments(state)?;
        // Only the (a, b) entries are needed; compute them directly in O(|E| + n).
        let (mut edge, mut total_a, mut total_b, mut self_product) = (0.0, 0.0, 0.0, 0.0);
        for (i, row) in pi.iter().enumerate() {
            let linked_b: f64 = self.neighbors[i].iter().map(|&j| pi[j][b]).sum();
            edge += row[a] * linked_b;
            total_a += row[a];
            total_b += row[b];
            self_product += row[a] * row[b];
        }
        let mut edge_m = Matrix::zeros(self.k, self.k);
        let mut all_m = Matrix::zeros(self.k, self.k);
        edge_m[(a, b)] = edge;
        all_m[(a, b)] = total_a * total_b - self_product;
        let stats = PairStatistics { edge: edge_m, all: all_m };
        Ok(Factor::Beta(self.connectivity_optimum(&stats, a, b)?))
    }

    /// Node-by-node in place (each row sees the rows already refreshed), or all rows
    /// from the old assignments at once.
    fn refresh_latents(&self, state: &mut MeanFieldState, mode: LatentMode) -> Result<()> {
        let (log_b, log_nb) = self.expected_logs(state)?;
        let mut pi: Vec<Vec<f64>> = self.assignments(state)?.into_iter().map(|r| r.to_vec()).collect();
        let mut totals = vec![0.0; self.k];
        for row in &pi {
            for (t, p) in totals.iter_mut().zip(row) {
                *t += p;
            }
        }
        match mode {
            LatentMode::InPlace => {
                for i in 0..self.n() {
                    let fresh = self.assignment_optimum(i, &pi, &totals, &log_b, &log_nb)?;
                    for (t, (old, new)) in totals.iter_mut().zip(pi[i].iter().zip(fresh.probabilities())) {
                        *t += new - old;
                    }
                    pi[i].copy_from_slice(fresh.probabilities());
                    state.latent_factors[i] = Factor::Categorical(fresh);
                }
            }
            LatentMode::Simultaneous => {
                for i in 0..self.n() {
                    state.latent_factors[i] =
                        Factor::Categorical(self.assignment_optimum(i, &pi, &totals, &log_b, &log_nb)?);
                }
            }
        }
        Ok(())
    }

    /// `−Σ_{a≤b} KL(q_ab ‖ prior_ab) + Σᵢₐ π_ia log(π⁰_ia/π_ia)
    ///  + Σ_{i<j} Σ_{a,b} π_ia π_jb [A_ij E log B_ab + (1 − A_ij) E log(1 − B_ab)]`.
    fn elbo(&self, state: &MeanFieldState) -> Result<f64> {
        let factors = self.connectivity(state)?;
        let pi = self.assignments(state)?;
        let mut total = 0.0;
        for (f, &(a, b)) in factors.iter().zip(&self.pairs) {
            let prior = Factor::Beta(BetaFactor::new(self.prior.alpha[(a, b)], self.prior.beta[(a, b)])?);
            total -= factor_kl(&Factor::Beta((*f).clone()), &prior)?;
        }
        for (row, prior_row) in pi.iter().zip(&self.prior.pi) {
            for (&p, &p0) in row.iter().zip(prior_row) {
                if p > 0.0 {
                    total += p * p0.ln() - xlogx(p);
                }
            }
        }
        let (log_b, log_nb) = self.expected_logs(state)?;
        let stats = self.pair_statistics(&pi);
        for a in 0..self.k {
            for b in 0..self.k {
                let non_edges = stats.all[(a, b)] - stats.edge[(a, b)];
                total += 0.5 * (stats.edge[(a, b)] * log_b[(a, b)] + non_edges * log_nb[(a, b)]);
            }
        }
        Ok(total)
    }

    fn check_state(&self, state: &MeanFieldState) -> Result<()> {
        if state.parameter_factors.len() != self.pairs.len() || state.latent_factors.len() != self.n() {
            return Err(usage("block model state layout mismatch"));
        }
        self.connectivity(state)?;
        for row in self.assignments(state)? {
            if row.len() != self.k {
                return Err(usage("assignment row has the wrong number of communities"));
            }
        }
        Ok(())
    }
}

impl EvidenceModel for SbmModel {
    /// Draws `B` from its Beta prior and sums the assignments exactly.
    fn sample_prior_log_likelihood(&self, rng: &mut ChaCha8Rng) -> Result<f64> {
        self.check_exact_size()?;
        let mut b = Matrix::zeros(self.k, self.k);
        for &(x, y) in &self.pairs {
            let dist = BetaDistribution::new(self.prior.alpha[(x, y)], self.prior.beta[(x, y)])
                .map_err(|e| usage(format!("invalid Beta prior: {e}")))?;
            let draw: f64 = dist.sample(rng);
            let draw = draw.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            b[(x, y)] = draw;
            b[(y, x)] = draw;
        }
        self.log_likelihood_given_connectivity(&b)
    }
}
