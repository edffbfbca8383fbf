//! Experiment runners: fitting candidates to their ELBO optimum, model
//! selection tables, ELBO/BIC/evidence gap studies, convergence traces and the
//! probit prediction study. Every runner is deterministic given its seeds.

use meanfield::engine::{
    reference_optimum, run_cavi, run_cavi_with_reference, ConvergenceTrace, ModelSpec, Reference, Schedule,
    ScheduleKind, StoppingRule,
};
use meanfield::error::Error;
use meanfield::evidence::{mc_evidence, EvidenceEstimate};
use meanfield::factors::MeanFieldState;
use meanfield::linalg::{Matrix, Vector};
use meanfield::models::gmm::{theoretical_c_tilde_star, EmSettings};
use meanfield::models::{Factorization, GmmModel, MleFit, NormalModel, NormalPrior, ProbitModel, SbmModel};
use meanfield::par::{self, stream_rng};
use meanfield::selection::{gap_constants, kl_projection_theta_star, select, Criterion, CriterionValue};
use meanfield::special::{log_norm_cdf, Side};
use meanfield::Result;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::design::{GmmDesign, NormalDesign, ProbitData, ProbitDesign};
use crate::output::{Cell, Table};

/// Sweep budget and ELBO tolerance used when a fit must reach its optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub patience: usize,
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        Self { max_iterations: 20_000, tolerance: 1e-10, patience: 3 }
    }
}

/// A CAVI run taken to (numerical) convergence.
#[derive(Debug, Clone)]
pub struct Fit {
    pub state: MeanFieldState,
    pub elbo: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs CAVI with step size 1 until the ELBO stops changing.
pub fn optimize(
    model: &dyn ModelSpec,
    init: MeanFieldState,
    kind: ScheduleKind,
    settings: OptimizeSettings,
    seed: u64,
) -> Result<Fit> {
    let schedule = Schedule::new(kind, 1.0)?;
    let per_sweep = if kind.is_sequential() { model.parameter_blocks() } else { 1 };
    let stop = StoppingRule::new(settings.max_iterations * per_sweep, settings.tolerance, settings.patience)?;
    let (state, trace) = run_cavi(model, init, schedule, stop, seed)?;
    if !trace.converged {
        log::warn!("CAVI stopped after {} iterations without meeting the ELBO tolerance", trace.iterations_run);
    }
    Ok(Fit { elbo: trace.final_elbo(), iterations: trace.iterations_run, converged: trace.converged, state })
}

/// One fitted candidate: its optimal ELBO, maximal log-likelihood and optional evidence.
#[derive(Debug, Clone)]
pub struct CandidateFit {
    pub model_id: String,
    pub d_m: usize,
    pub n: usize,
    pub elbo: f64,
    pub mle: MleFit,
    pub evidence: Option<EvidenceEstimate>,
    pub converged: bool,
}

impl CandidateFit {
    pub fn criteria(&self) -> Result<CriterionValue> {
        let mut value =
            CriterionValue::new(self.model_id.clone(), self.elbo, self.mle.log_likelihood, self.d_m, self.n)?;
        if let Some(e) = self.evidence {
            value = value.with_evidence(e.log_evidence, e.stderr_log);
        }
        Ok(value)
    }

    /// `−BIC/2 − ELBO`.
    pub fn bic_elbo_gap(&self) -> Result<f64> {
        Ok(-0.5 * self.criteria()?.bic - self.elbo)
    }
}

/// Location-scale normal candidate.
pub fn fit_normal(
    data: &[f64],
    prior: NormalPrior,
    evidence_samples: Option<usize>,
    seed: u64,
) -> Result<CandidateFit> {
    let model = NormalModel::new(data.to_vec(), prior)?;
    let fit = optimize(
        &model,
        model.initial_state(seed)?,
        ScheduleKind::SequentialSystematic,
        OptimizeSettings::default(),
        seed,
    )?;
    Ok(CandidateFit {
        model_id: "normal".into(),
        d_m: model.parameter_count(),
        n: model.n(),
        elbo: fit.elbo,
        mle: model.mle()?,
        evidence: evidence_samples.map(|s| mc_evidence(&model, s, seed)).transpose()?,
        converged: fit.converged,
    })
}

/// Restarts used for the mixture ELBO (the variational objective is multimodal).
pub const GMM_VB_RESTARTS: usize = 5;

/// Mixture candidate with `k` components: best ELBO over [`GMM_VB_RESTARTS`]
/// initializations and the EM maximum likelihood.
pub fn fit_gmm(
    data: &[f64],
    k: usize,
    prior_sd: f64,
    em: EmSettings,
    evidence_samples: Option<usize>,
    seed: u64,
) -> Result<CandidateFit> {
    let model = GmmModel::new(data.to_vec(), k, prior_sd)?;
    let mut best: Option<Fit> = None;
    for restart in 0..GMM_VB_RESTARTS {
        let init = gmm_initial_state(&model, seed, restart)?;
        let fit = optimize(&model, init, ScheduleKind::Parallel, OptimizeSettings::default(), seed)?;
        if best.as_ref().is_none_or(|b| fit.elbo > b.elbo) {
            best = Some(fit);
        }
    }
    let best = best.expect("at least one restart");
    Ok(CandidateFit {
        model_id: format!("K={k}"),
        d_m: model.parameter_count(),
        n: model.n(),
        elbo: best.elbo,
        mle: model.mle(EmSettings { seed, ..em })?,
        evidence: evidence_samples.map(|s| mc_evidence(&model, s, seed)).transpose()?,
        converged: best.converged,
    })
}

/// Restart 0 is the model's default (quantile) start; later restarts place the
/// centers at distinct randomly chosen data points.
fn gmm_initial_state(model: &GmmModel, seed: u64, restart: usize) -> Result<MeanFieldState> {
    let default = model.initial_state(seed)?;
    if restart == 0 || model.n() < model.components() {
        return Ok(default);
    }
    let mut rng = stream_rng(seed, 100 + restart as u64);
    let mut points: Vec<f64> = model.data().choose_multiple(&mut rng, model.components()).copied().collect();
    points.sort_by(|a, b| a.total_cmp(b));
    let s2 = model.prior_sd() * model.prior_sd();
    let centers: Vec<(f64, f64)> = points.into_iter().map(|m| (m, s2)).collect();
    let assignments = default
        .latent_factors
        .iter()
        .map(|f| f.as_categorical().map(|c| c.probabilities().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    model.state(&centers, assignments)
}

/// Probit candidate on the feature subset `features`, block or fully factorized.
pub fn fit_probit(
    x: &Matrix,
    y: &[u8],
    features: &[usize],
    prior_sd: f64,
    mode: Factorization,
    evidence_samples: Option<usize>,
    seed: u64,
) -> Result<CandidateFit> {
    let model = ProbitModel::with_isotropic_prior(x.select_columns(features), y.to_vec(), prior_sd, mode)?;
    let kind = match mode {
        Factorization::Block => ScheduleKind::Parallel,
        Factorization::FullyFactorized => ScheduleKind::SequentialSystematic,
    };
    let fit = optimize(&model, model.initial_state(seed)?, kind, OptimizeSettings::default(), seed)?;
    Ok(CandidateFit {
        model_id: format!("p={}", features.len()),
        d_m: model.parameter_count(),
        n: model.n(),
        elbo: fit.elbo,
        mle: model.mle()?,
        evidence: evidence_samples.map(|s| mc_evidence(&model, s, seed)).transpose()?,
        converged: fit.converged,
    })
}

/// Block-model candidate with `k` communities, fitted by parallel CAVI with full
/// step; the MLE is approximated by the variational mean.
pub fn fit_sbm(adjacency: &[Vec<u8>], k: usize, evidence_samples: Option<usize>, seed: u64) -> Result<CandidateFit> {
    let model = SbmModel::with_uniform_prior(adjacency.to_vec(), k)?;
    let fit = optimize(&model, model.initial_state(seed)?, ScheduleKind::Parallel, OptimizeSettings::default(), seed)?;
    Ok(CandidateFit {
        model_id: format!("K={k}"),
        d_m: model.parameter_count(),
        n: model.n(),
        elbo: fit.elbo,
        mle: model.plug_in_mle(&fit.state)?,
        evidence: evidence_samples.map(|s| mc_evidence(&model, s, seed)).transpose()?,
        converged: fit.converged,
    })
}

/// Criteria of every candidate plus the criteria under which it is selected.
pub fn selection_table(candidates: &[CandidateFit]) -> Result<Table> {
    let values = candidates.iter().map(CandidateFit::criteria).collect::<Result<Vec<_>>>()?;
    let mut winners: Vec<Vec<&str>> = vec![Vec::new(); values.len()];
    for criterion in [Criterion::Elbo, Criterion::Bic, Criterion::Aic, Criterion::Evidence] {
        if let Ok(best) = select(&values, criterion) {
            let idx = values.iter().position(|v| std::ptr::eq(v, best)).expect("selected value is a candidate");
            winners[idx].push(criterion.as_str());
        }
    }
    let mut table = Table::new(&[
        "model",
        "d_m",
        "n",
        "elbo",
        "loglik",
        "bic",
        "aic",
        "evidence",
        "evidence_stderr",
        "neg_half_bic_minus_elbo",
        "converged",
        "selected_by",
    ]);
    for ((c, v), w) in candidates.iter().zip(&values).zip(winners) {
        table.push(vec![
            c.model_id.as_str().into(),
            c.d_m.into(),
            c.n.into(),
            c.elbo.into(),
            c.mle.log_likelihood.into(),
            v.bic.into(),
            v.aic.into(),
            c.evidence.map(|e| e.log_evidence).into(),
            c.evidence.map(|e| e.stderr_log).into(),
            (-0.5 * v.bic - c.elbo).into(),
            Cell::from(if c.converged { "true" } else { "false" }),
            w.join(";").into(),
        ]);
    }
    Ok(table)
}

/// Model selected under `criterion`.
pub fn selected(candidates: &[CandidateFit], criterion: Criterion) -> Result<&CandidateFit> {
    let values = candidates.iter().map(CandidateFit::criteria).collect::<Result<Vec<_>>>()?;
    let best = select(&values, criterion)?;
    Ok(&candidates[values.iter().position(|v| std::ptr::eq(v, best)).expect("selected value is a candidate")])
}

/// Mixture selection over `K ∈ ks` on one dataset drawn from `design`.
pub fn gmm_selection(
    design: GmmDesign,
    ks: &[usize],
    prior_sd: f64,
    evidence_samples: Option<usize>,
    seed: u64,
) -> Result<Vec<CandidateFit>> {
    let data = design.generate(seed)?;
    ks.iter().map(|&k| fit_gmm(&data.x, k, prior_sd, EmSettings::default(), evidence_samples, seed)).collect()
}

/// Nested probit candidates using the first `s` features for each `s ∈ sizes`.
pub fn probit_selection(
    data: &ProbitData,
    sizes: &[usize],
    prior_sd: f64,
    evidence_samples: Option<usize>,
    seed: u64,
) -> Result<Vec<CandidateFit>> {
    sizes
        .iter()
        .map(|&s| {
            let features: Vec<usize> = (0..s).collect();
            fit_probit(&data.x, &data.y, &features, prior_sd, Factorization::Block, evidence_samples, seed)
        })
        .collect()
}

/// One row of a gap study.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub label: String,
    pub n: usize,
    pub grid_value: f64,
    pub elbo: f64,
    pub neg_half_bic: f64,
    pub evidence: Option<EvidenceEstimate>,
    /// Limit of `evidence − ELBO`.
    pub c_star: Option<f64>,
    /// Limit of `−BIC/2 − ELBO`.
    pub c_tilde_star: Option<f64>,
}

impl GapRow {
    pub fn bic_elbo_gap(&self) -> f64 {
        self.neg_half_bic - self.elbo
    }
}

pub fn gap_table(rows: &[GapRow]) -> Table {
    let mut table = Table::new(&[
        "model",
        "n",
        "grid_value",
        "elbo",
        "neg_half_bic",
        "neg_half_bic_minus_elbo",
        "evidence",
        "evidence_stderr",
        "evidence_minus_elbo",
        "elbo_relative_error",
        "bic_relative_error",
        "c_star",
        "c_tilde_star",
    ]);
    for r in rows {
        let ev = r.evidence.map(|e| e.log_evidence);
        table.push(vec![
            r.label.as_str().into(),
            r.n.into(),
            r.grid_value.into(),
            r.elbo.into(),
            r.neg_half_bic.into(),
            r.bic_elbo_gap().into(),
            ev.into(),
            r.evidence.map(|e| e.stderr_log).into(),
            ev.map(|e| e - r.elbo).into(),
            ev.map(|e| (r.elbo - e) / e.abs()).into(),
            ev.map(|e| (r.neg_half_bic - e) / e.abs()).into(),
            r.c_star.into(),
            r.c_tilde_star.into(),
        ]);
    }
    table
}

/// Location-scale normal gaps on `N(100, 100²)` data with prior
/// `μ ~ N(0, s²)`, `σ² ~ IG(1/s, 1/s)` for each `(n, s)` in the grid.
pub fn normal_gaps(grid: &[(usize, f64)], evidence_samples: usize, seed: u64) -> Result<Vec<GapRow>> {
    let rows = par::map_indexed(grid.len(), |i| -> Result<GapRow> {
        let (n, s) = grid[i];
        let data = NormalDesign::benchmark(n).generate(seed)?;
        let prior = NormalPrior::new(0.0, s * s, 1.0 / s, 1.0 / s)?;
        let fit = fit_normal(&data, prior, Some(evidence_samples), seed)?;
        let model = NormalModel::new(data, prior)?;
        let theta = &fit.mle.theta;
        let constants = gap_constants(&model.fisher_bundle((theta[0], theta[1]))?, None)?;
        Ok(GapRow {
            label: "normal".into(),
            n,
            grid_value: s,
            elbo: fit.elbo,
            neg_half_bic: -0.5 * fit.criteria()?.bic,
            evidence: fit.evidence,
            c_star: Some(constants.c_star),
            c_tilde_star: Some(constants.c_tilde_star),
        })
    });
    rows.into_iter().collect()
}

/// Mixture gaps for the true `K` on `design` data with `n` from `ns`.
pub fn gmm_gaps(
    design: GmmDesign,
    prior_sd: f64,
    ns: &[usize],
    em: EmSettings,
    evidence_samples: Option<usize>,
    seed: u64,
) -> Result<Vec<GapRow>> {
    let c_tilde = theoretical_c_tilde_star(&design.centers(), prior_sd);
    let rows = par::map_indexed(ns.len(), |i| -> Result<GapRow> {
        let n = ns[i];
        let data = GmmDesign { n, ..design }.generate(seed)?;
        let fit = fit_gmm(&data.x, design.k, prior_sd, em, evidence_samples, seed)?;
        Ok(GapRow {
            label: format!("gmm_delta={}", design.delta),
            n,
            grid_value: design.delta,
            elbo: fit.elbo,
            neg_half_bic: -0.5 * fit.criteria()?.bic,
            evidence: fit.evidence,
            c_star: None,
            c_tilde_star: Some(c_tilde),
        })
    });
    rows.into_iter().collect()
}

/// Settings of the probit constant study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbitGapSettings {
    pub prior_sd: f64,
    /// Draws used to locate `β*` for models missing signal features.
    pub projection_samples: usize,
    /// Draws used for the Monte Carlo Fisher information.
    pub fisher_samples: usize,
    pub evidence_samples: Option<usize>,
}

impl Default for ProbitGapSettings {
    fn default() -> Self {
        Self { prior_sd: 10.0, projection_samples: 1_000_000, fisher_samples: 1_000_000, evidence_samples: None }
    }
}

/// `β*` for the model using the first `size` features of `design`: the true
/// coefficients when the model contains every signal feature, otherwise the
/// KL projection approximated on a large simulated sample.
pub fn probit_theta_star(design: &ProbitDesign, size: usize, samples: usize, seed: u64) -> Result<Vector> {
    let p = design.p();
    if size == 0 || size > p {
        return Err(Error::Usage(format!("model size must lie in 1..={p}")));
    }
    if design.beta.iter().skip(size).all(|&b| b == 0.0) {
        return Ok(design.beta.rows(0, size).into_owned());
    }
    let projection = kl_projection_theta_star(
        |rng, m| design.sample(rng, m),
        |data: &ProbitData| {
            let sides: Vec<Side> = data.y.iter().map(|&v| Side::from_response(v)).collect();
            meanfield::models::probit::probit_mle(&data.x.columns(0, size).into_owned(), &sides)
        },
        samples,
        seed,
    )?;
    Ok(projection.theta)
}

/// Probit gaps for nested models of the given sizes and each `n`; the limits come
/// from the Monte Carlo Fisher bundle at `β*` with the block partition.
pub fn probit_gaps(
    design: &ProbitDesign,
    sizes: &[usize],
    ns: &[usize],
    settings: ProbitGapSettings,
    seed: u64,
) -> Result<Vec<GapRow>> {
    let cov = design.feature_covariance();
    let mut constants = Vec::with_capacity(sizes.len());
    for (i, &size) in sizes.iter().enumerate() {
        let theta = probit_theta_star(design, size, settings.projection_samples, seed.wrapping_add(1000 + i as u64))?;
        let sub_cov = cov.view((0, 0), (size, size)).into_owned();
        let prior = Matrix::identity(size, size) * (settings.prior_sd * settings.prior_sd);
        let bundle = ProbitModel::fisher_bundle_gaussian_design(
            &theta,
            &sub_cov,
            &prior,
            settings.fisher_samples,
            seed.wrapping_add(2000 + i as u64),
        )?;
        constants.push(gap_constants(&bundle, Some(&[size]))?);
    }
    let tasks: Vec<(usize, usize)> = ns.iter().flat_map(|&n| (0..sizes.len()).map(move |s| (n, s))).collect();
    let rows = par::map_indexed(tasks.len(), |t| -> Result<GapRow> {
        let (n, s) = tasks[t];
        let size = sizes[s];
        let data = ProbitDesign { n, ..design.clone() }.generate(seed)?;
        let features: Vec<usize> = (0..size).collect();
        let fit = fit_probit(
            &data.x,
            &data.y,
            &features,
            settings.prior_sd,
            Factorization::Block,
            settings.evidence_samples,
            seed,
        )?;
        Ok(GapRow {
            label: format!("probit_p={size}"),
            n,
            grid_value: size as f64,
            elbo: fit.elbo,
            neg_half_bic: -0.5 * fit.criteria()?.bic,
            evidence: fit.evidence,
            c_star: constants[s].c_block_star,
            c_tilde_star: constants[s].c_tilde_block_star,
        })
    });
    rows.into_iter().collect()
}

/// One `(schedule, γ)` trace against the reference optimum.
#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub kind: ScheduleKind,
    pub gamma: f64,
    pub trace: ConvergenceTrace,
    pub diverged: bool,
}

impl ConvergenceRun {
    /// Least-squares slope of `log regret` against the iteration index over
    /// iterations whose regret lies in `(floor, ceiling)`; `None` with fewer than 3 points.
    pub fn log_regret_slope(&self, floor: f64, ceiling: f64) -> Option<f64> {
        let regrets = self.trace.regret_per_iteration.as_ref()?;
        let points: Vec<(f64, f64)> = regrets
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > floor && r < ceiling)
            .map(|(t, &r)| (t as f64, r.ln()))
            .collect();
        if points.len() < 3 {
            return None;
        }
        let n = points.len() as f64;
        let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
        let (sxy, sxx) =
            points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx).powi(2)));
        Some(sxy / sxx)
    }
}

/// Runs every `(schedule, γ)` pair from the model's default start for
/// `iterations` iterations, recording regret and KL against a reference optimum
/// obtained by long sequential CAVI.
pub fn convergence_runs(
    model: &dyn ModelSpec,
    grid: &[(ScheduleKind, f64)],
    iterations: usize,
    seed: u64,
) -> Result<Vec<ConvergenceRun>> {
    let init = model.initial_state(seed)?;
    let (ref_state, ref_elbo) = reference_optimum(model, init.clone(), 100.0)?;
    let reference = Reference { elbo: ref_elbo, state: Some(ref_state) };
    let mut runs = Vec::with_capacity(grid.len());
    for &(kind, gamma) in grid {
        let schedule = Schedule::new(kind, gamma)?;
        // Tolerance 0: run the full budget so traces are comparable.
        let stop = StoppingRule::new(iterations, 0.0, 1)?;
        let (trace, diverged) =
            match run_cavi_with_reference(model, init.clone(), schedule, stop, seed, Some(&reference)) {
                Ok((_, trace)) => (trace, false),
                Err(Error::Diverged { trace }) => (*trace, true),
                Err(e) => return Err(e),
            };
        runs.push(ConvergenceRun { kind, gamma, trace, diverged });
    }
    Ok(runs)
}

pub fn convergence_table(runs: &[ConvergenceRun], timing: bool) -> Table {
    let mut columns = vec!["schedule", "gamma", "iteration", "elbo", "regret", "kl_to_reference"];
    if timing {
        columns.push("elapsed_seconds");
    }
    let mut table = Table::new(&columns);
    for run in runs {
        for (t, &elbo) in run.trace.elbo_per_iteration.iter().enumerate() {
            let mut row = vec![
                run.kind.as_str().into(),
                run.gamma.into(),
                (t + 1).into(),
                elbo.into(),
                run.trace.regret_per_iteration.as_ref().map(|r| r[t]).into(),
                run.trace.kl_to_reference.as_ref().map(|k| k[t]).into(),
            ];
            if timing {
                row.push(run.trace.elapsed_seconds[t].into());
            }
            table.push(row);
        }
    }
    table
}

/// How candidate feature paths are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureOrder {
    /// Columns in their given order (signal features first in the synthetic designs).
    Given,
    /// Decreasing absolute correlation with the response on the training split.
    Correlation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionSettings {
    pub train_size: usize,
    pub replicates: usize,
    /// Largest model on the nested path.
    pub max_size: usize,
    pub prior_sd: f64,
    pub order: FeatureOrder,
}

/// Held-out performance of the model picked by one criterion in one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    pub replicate: usize,
    pub criterion: Criterion,
    pub model_size: usize,
    pub classification_error: f64,
    pub logistic_loss: f64,
}

pub const PREDICTION_CRITERIA: [Criterion; 3] = [Criterion::Elbo, Criterion::Aic, Criterion::Bic];

/// Nested-path variable selection on random train/test splits of `data`.
///
/// For every prefix size the block-mean-field ELBO and the maximum likelihood are
/// computed on the training split (both warm-started from the previous size);
/// the model chosen by each criterion is its training MLE, evaluated on the rest.
pub fn prediction_study(data: &ProbitData, settings: PredictionSettings, seed: u64) -> Result<Vec<PredictionReport>> {
    let (n, p) = data.x.shape();
    if settings.train_size == 0 || settings.train_size >= n {
        return Err(Error::Usage(format!("train size must lie in 1..{n}, got {}", settings.train_size)));
    }
    let max_size = settings.max_size.min(p).max(1);
    let per_replicate = par::map_indexed(settings.replicates, |r| -> Result<Vec<PredictionReport>> {
        let mut rng = stream_rng(seed, r as u64);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let (train, test) = idx.split_at(settings.train_size);
        let x_train = data.x.select_rows(train);
        let y_train: Vec<u8> = train.iter().map(|&i| data.y[i]).collect();
        let x_test = data.x.select_rows(test);
        let y_test: Vec<u8> = test.iter().map(|&i| data.y[i]).collect();
        let order = match settings.order {
            FeatureOrder::Given => (0..p).collect(),
            FeatureOrder::Correlation => correlation_order(&x_train, &y_train),
        };
        let path = nested_path(&x_train, &y_train, &order[..max_size], settings.prior_sd)?;
        let values = path.iter().map(|c| c.criteria()).collect::<Result<Vec<_>>>()?;
        PREDICTION_CRITERIA
            .iter()
            .map(|&criterion| {
                let best = select(&values, criterion)?;
                let size = best.d_m;
                let beta = &path[size - 1].mle.theta;
                let (err, loss) = evaluate(&x_test.select_columns(&order[..size]), &y_test, beta);
                Ok(PredictionReport {
                    replicate: r,
                    criterion,
                    model_size: size,
                    classification_error: err,
                    logistic_loss: loss,
                })
            })
            .collect()
    });
    let mut reports = Vec::new();
    for r in per_replicate {
        reports.extend(r?);
    }
    Ok(reports)
}

fn nested_path(x: &Matrix, y: &[u8], order: &[usize], prior_sd: f64) -> Result<Vec<CandidateFit>> {
    let sides: Vec<Side> = y.iter().map(|&v| Side::from_response(v)).collect();
    let mut path: Vec<CandidateFit> = Vec::with_capacity(order.len());
    let mut warm_mle = Vector::zeros(0);
    let mut warm_vb = Vector::zeros(0);
    for s in 1..=order.len() {
        let model = ProbitModel::with_isotropic_prior(
            x.select_columns(&order[..s]),
            y.to_vec(),
            prior_sd,
            Factorization::Block,
        )?;
        let start = warm_mle.clone().insert_row(s - 1, 0.0);
        let mle = meanfield::models::probit::probit_mle_from(model.design(), &sides, &start)?;
        let init = model.state_from_mean(&warm_vb.clone().insert_row(s - 1, 0.0))?;
        let fit = optimize(&model, init, ScheduleKind::Parallel, OptimizeSettings::default(), 0)?;
        warm_mle = mle.theta.clone();
        warm_vb = model.coefficient_mean(&fit.state)?;
        path.push(CandidateFit {
            model_id: format!("p={s:03}"),
            d_m: s,
            n: model.n(),
            elbo: fit.elbo,
            mle,
            evidence: None,
            converged: fit.converged,
        });
    }
    Ok(path)
}

/// Columns sorted by decreasing `|corr(xⱼ, y)|`; ties keep column order.
pub fn correlation_order(x: &Matrix, y: &[u8]) -> Vec<usize> {
    let n = y.len() as f64;
    let y_mean = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let scores: Vec<f64> = (0..x.ncols())
        .map(|j| {
            let col = x.column(j);
            let x_mean = col.mean();
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for (xi, &yi) in col.iter().zip(y) {
                let (dx, dy) = (xi - x_mean, yi as f64 - y_mean);
                sxy += dx * dy;
                sxx += dx * dx;
                syy += dy * dy;
            }
            if sxx > 0.0 && syy > 0.0 {
                (sxy / (sxx * syy).sqrt()).abs()
            } else {
                0.0
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..x.ncols()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Probabilities clamped to `[1e-12, 1 − 1e-12]` before taking logs.
pub const PROBABILITY_CLAMP: f64 = 1e-12;

/// `(classification error, logistic loss)` of `P(Y=1|x) = Φ(xᵀβ)` on `(x, y)`.
pub fn evaluate(x: &Matrix, y: &[u8], beta: &Vector) -> (f64, f64) {
    let eta = x * beta;
    let mut errors = 0usize;
    let mut loss = 0.0;
    for (&e, &yi) in eta.iter().zip(y) {
        let p = log_norm_cdf(e).exp().clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
        if u8::from(p >= 0.5) != yi {
            errors += 1;
        }
        loss -= if yi == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    let m = y.len().max(1) as f64;
    (errors as f64 / m, loss / m)
}

pub fn prediction_table(reports: &[PredictionReport]) -> Table {
    let mut table = Table::new(&["replicate", "criterion", "model_size", "classification_error", "logistic_loss"]);
    for r in reports {
        table.push(vec![
            r.replicate.into(),
            r.criterion.as_str().into(),
            r.model_size.into(),
            r.classification_error.into(),
            r.logistic_loss.into(),
        ]);
    }
    table
}

/// Per-criterion summary: mean (sd) error, median loss, mean (sd) size.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSummary {
    pub criterion: Criterion,
    pub mean_error: f64,
    pub sd_error: f64,
    pub median_loss: f64,
    pub mean_size: f64,
    pub sd_size: f64,
}

pub fn summarize_predictions(reports: &[PredictionReport]) -> Vec<PredictionSummary> {
    PREDICTION_CRITERIA
        .iter()
        .filter_map(|&criterion| {
            let rows: Vec<&PredictionReport> = reports.iter().filter(|r| r.criterion == criterion).collect();
            if rows.is_empty() {
                return None;
            }
            let errors: Vec<f64> = rows.iter().map(|r| r.classification_error).collect();
            let sizes: Vec<f64> = rows.iter().map(|r| r.model_size as f64).collect();
            let mut losses: Vec<f64> = rows.iter().map(|r| r.logistic_loss).collect();
            losses.sort_by(|a, b| a.total_cmp(b));
            let median_loss = if losses.len() % 2 == 1 {
                losses[losses.len() / 2]
            } else {
                0.5 * (losses[losses.len() / 2 - 1] + losses[losses.len() / 2])
            };
            let (mean_error, sd_error) = mean_sd(&errors);
            let (mean_size, sd_size) = mean_sd(&sizes);
            Some(PredictionSummary { criterion, mean_error, sd_error, median_loss, mean_size, sd_size })
        })
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub fn prediction_summary_table(summary: &[PredictionSummary]) -> Table {
    let mut table =
        Table::new(&["criterion", "mean_error", "sd_error", "median_logistic_loss", "mean_size", "sd_size"]);
    for s in summary {
        table.push(vec![
            s.criterion.as_str().into(),
            s.mean_error.into(),
            s.sd_error.into(),
            s.median_loss.into(),
            s.mean_size.into(),
            s.sd_size.into(),
        ]);
    }
    table
}

/// Uniform random draw helper for seeds derived from a base seed.
pub fn derived_seed(seed: u64, index: u64) -> u64 {
    stream_rng(seed, 1 << 32 | index).random()
}
