//! Command-line surface: argument definitions and subcommand dispatch.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use meanfield::engine::{ModelSpec, ScheduleKind};
use meanfield::evidence::mc_evidence;
use meanfield::models::gmm::EmSettings;
use meanfield::models::{EvidenceModel, Factorization, GmmModel, NormalModel, NormalPrior, ProbitModel, SbmModel};

use crate::design::{FeatureCovariance, GmmDesign, NormalDesign, ProbitData, ProbitDesign, SbmDesign};
use crate::error::{usage, CliResult};
use crate::libsvm::{read_libsvm, write_libsvm, Dataset};
use crate::output::{Cell, Format, Table};
use crate::runners::{self, FeatureOrder, PredictionSettings, ProbitGapSettings};

#[derive(Debug, Parser)]
#[command(name = "meanfield", version, about = "Mean-field variational inference experiments")]
pub struct Cli {
    /// Seed for data generation and every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file (standard output when omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Normal,
    Gmm,
    Probit,
    Sbm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (LibSVM text for probit, CSV/JSON otherwise).
    Gen {
        #[arg(value_enum)]
        family: Family,
        #[command(flatten)]
        design: DesignArgs,
    },
    /// Fit one model and report its ELBO, maximal log-likelihood and criteria.
    Fit {
        #[arg(value_enum)]
        family: Family,
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Also estimate the log evidence with this many prior draws.
        #[arg(long)]
        evidence_samples: Option<usize>,
    },
    /// Fit a grid of candidates and report every criterion with the selected model.
    Select {
        #[arg(value_enum)]
        family: Family,
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Candidate K (gmm, sbm) or numbers of leading features (probit).
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 5, 6])]
        candidates: Vec<usize>,
        #[arg(long)]
        evidence_samples: Option<usize>,
    },
    /// Monte Carlo log evidence with its standard error.
    Evidence {
        #[arg(value_enum)]
        family: Family,
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// ELBO, −BIC/2 and evidence gaps over a grid, with their theoretical limits.
    Gaps {
        #[arg(value_enum)]
        family: Family,
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Sample sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [55usize, 148, 403, 1097, 2981])]
        ns: Vec<usize>,
        /// Prior scales s (normal family).
        #[arg(long, value_delimiter = ',', default_values_t = [1.0f64, std::f64::consts::E, 7.38905609893065, 20.085536923187668])]
        prior_scales: Vec<f64>,
        /// Nested model sizes (probit family).
        #[arg(long, value_delimiter = ',', default_values_t = [3usize, 5, 7])]
        sizes: Vec<usize>,
        #[arg(long)]
        evidence_samples: Option<usize>,
        /// Monte Carlo draws for β* and the Fisher information (probit family).
        #[arg(long, default_value_t = 1_000_000)]
        fisher_samples: usize,
    },
    /// ELBO regret and KL traces for each schedule and step size.
    Convergence {
        #[arg(value_enum)]
        family: Family,
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_values_t = ["parallel".to_string(), "sequential_systematic".to_string(), "sequential_randomized".to_string()])]
        schedules: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0f64])]
        gammas: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        /// Add a wall-time column (breaks byte-identical output across runs).
        #[arg(long)]
        timing: bool,
    },
    /// Nested-path variable selection for probit with held-out evaluation.
    Predict {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = 500)]
        train_size: usize,
        #[arg(long, default_value_t = 20)]
        replicates: usize,
        /// Largest model on the nested path.
        #[arg(long, default_value_t = 40)]
        max_size: usize,
        #[arg(long, default_value_t = 10.0)]
        prior_sd: f64,
        /// Per-replicate rows instead of the per-criterion summary.
        #[arg(long)]
        per_replicate: bool,
    },
}

/// Design parameters; which ones apply depends on the family.
#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// Read data from a file instead of simulating (CSV column `x` for normal/gmm, LibSVM for probit).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Feature count when reading LibSVM input (largest index when omitted).
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Number of mixture components or communities in the simulated design.
    #[arg(long = "true-k", default_value_t = 3)]
    pub true_k: usize,
    /// Mixture center spacing Δ.
    #[arg(long, default_value_t = 3.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 100.0)]
    pub mean: f64,
    #[arg(long, default_value_t = 100.0)]
    pub sd: f64,
    /// Number of probit features.
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    /// Coefficient decay q.
    #[arg(long, default_value_t = 0.8)]
    pub q: f64,
    /// AR(1) feature correlation r.
    #[arg(long, default_value_t = 0.5)]
    pub r: f64,
    /// Equicorrelated features with this correlation instead of AR(1).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Number of non-zero coefficients (all `p` decay geometrically when omitted).
    #[arg(long)]
    pub nonzero: Option<usize>,
    #[arg(long, default_value_t = 0.6)]
    pub within: f64,
    #[arg(long, default_value_t = 0.4)]
    pub between_max: f64,
}

/// Model hyperparameters.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Components (gmm) or communities (sbm) of the fitted model.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Prior standard deviation (gmm centers, probit coefficients).
    #[arg(long, default_value_t = 10.0)]
    pub prior_sd: f64,
    /// Prior scale s of the normal model: μ ~ N(0, s²), σ² ~ IG(1/s, 1/s).
    #[arg(long, default_value_t = 1.0)]
    pub prior_scale: f64,
    /// Probit factorization: `block` or `factorized`.
    #[arg(long, default_value = "block")]
    pub factorization: String,
    /// Number of leading features used by the probit model (all when omitted).
    #[arg(long)]
    pub features: Option<usize>,
}

impl ModelArgs {
    fn factorization(&self) -> CliResult<Factorization> {
        Ok(self.factorization.parse()?)
    }

    fn normal_prior(&self) -> CliResult<NormalPrior> {
        let s = self.prior_scale;
        Ok(NormalPrior::new(0.0, s * s, 1.0 / s, 1.0 / s)?)
    }
}

impl DesignArgs {
    fn probit_design(&self) -> CliResult<ProbitDesign> {
        let covariance = match self.rho {
            Some(rho) => FeatureCovariance::Equicorrelated(rho),
            None => FeatureCovariance::Ar1(self.r),
        };
        let design = match self.nonzero {
            Some(k) => ProbitDesign::sparse(self.n, self.p, self.q, k, self.r)?,
            None => ProbitDesign::decaying(self.n, self.p, self.q, self.r)?,
        };
        Ok(ProbitDesign::new(self.n, design.beta, covariance)?)
    }

    fn gmm_design(&self) -> GmmDesign {
        GmmDesign { n: self.n, k: self.true_k, delta: self.delta }
    }

    fn scalar_data(&self, family: Family, seed: u64) -> CliResult<Vec<f64>> {
        if let Some(path) = &self.input {
            return read_column(path, "x");
        }
        Ok(match family {
            Family::Normal => NormalDesign { n: self.n, mean: self.mean, sd: self.sd }.generate(seed)?,
            _ => self.gmm_design().generate(seed)?.x,
        })
    }

    fn probit_data(&self, seed: u64) -> CliResult<ProbitData> {
        if let Some(path) = &self.input {
            let Dataset { x, y } = read_libsvm(path, self.width)?;
            return Ok(ProbitData { x, y });
        }
        Ok(self.probit_design()?.generate(seed)?)
    }

    fn adjacency(&self, seed: u64) -> CliResult<Vec<Vec<u8>>> {
        if let Some(path) = &self.input {
            return read_edges(path);
        }
        let design = SbmDesign { n: self.n, k: self.true_k, within: self.within, between_max: self.between_max };
        Ok(design.generate(seed)?.adjacency)
    }
}

/// Reads the numeric column `name` of a headed CSV file.
fn read_column(path: &PathBuf, name: &str) -> CliResult<Vec<f64>> {
    let source = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let j = reader.headers()?.iter().position(|h| h == name).ok_or_else(|| crate::CliError::Parse {
        path: source.clone(),
        line: 1,
        message: format!("no column '{name}'"),
    })?;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let cell = record.get(j).unwrap_or("");
        values.push(cell.trim().parse().map_err(|_| crate::CliError::Parse {
            path: source.clone(),
            line: i + 2,
            message: format!("invalid number '{cell}'"),
        })?);
    }
    Ok(values)
}

/// Reads an undirected graph from a CSV edge list with columns `i,j` (0-based);
/// the node count is one more than the largest index.
fn read_edges(path: &PathBuf) -> CliResult<Vec<Vec<u8>>> {
    let source = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let mut edges = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |k: usize| -> CliResult<usize> {
            record.get(k).and_then(|v| v.trim().parse().ok()).ok_or_else(|| crate::CliError::Parse {
                path: source.clone(),
                line: line + 2,
                message: "expected two node indices".into(),
            })
        };
        edges.push((parse(0)?, parse(1)?));
    }
    let n = edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0);
    let mut adjacency = vec![vec![0u8; n]; n];
    for (i, j) in edges {
        if i != j {
            adjacency[i][j] = 1;
            adjacency[j][i] = 1;
        }
    }
    Ok(adjacency)
}

/// Runs the parsed command, writing its output to `--out` or standard output.
pub fn run(cli: Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    let mut out: Box<dyn Write> = match &cli.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let format = Format::from(cli.format);
    match &cli.command {
        Command::Gen { family: Family::Probit, design } => {
            let data = design.probit_data(cli.seed)?;
            write_libsvm(&mut out, &Dataset { x: data.x, y: data.y })?;
        }
        command => execute(command, cli.seed)?.write(&mut out, format)?,
    }
    out.flush()?;
    Ok(())
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // A second configuration in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if threads.is_some_and(|t| t != 1) {
        log::warn!("built without the parallel feature; running on one thread");
    }
    Ok(())
}

/// Produces the output table of every command except probit generation.
pub fn execute(command: &Command, seed: u64) -> CliResult<Table> {
    match command {
        Command::Gen { family, design } => generate(*family, design, seed),
        Command::Fit { family, design, model, evidence_samples } => {
            let fit = fit_one(*family, design, model, None, *evidence_samples, seed)?;
            Ok(runners::selection_table(&[fit])?)
        }
        Command::Select { family, design, model, candidates, evidence_samples } => {
            if candidates.is_empty() {
                return Err(usage("--candidates must list at least one model"));
            }
            let fits = candidates
                .iter()
                .map(|&c| fit_one(*family, design, model, Some(c), *evidence_samples, seed))
                .collect::<CliResult<Vec<_>>>()?;
            Ok(runners::selection_table(&fits)?)
        }
        Command::Evidence { family, design, model, samples } => evidence(*family, design, model, *samples, seed),
        Command::Gaps { family, design, model, ns, prior_scales, sizes, evidence_samples, fisher_samples } => {
            let rows = match family {
                Family::Normal => {
                    let grid: Vec<(usize, f64)> =
                        ns.iter().flat_map(|&n| prior_scales.iter().map(move |&s| (n, s))).collect();
                    runners::normal_gaps(&grid, evidence_samples.unwrap_or(100_000), seed)?
                }
                Family::Gmm => runners::gmm_gaps(
                    design.gmm_design(),
                    model.prior_sd,
                    ns,
                    EmSettings::default(),
                    *evidence_samples,
                    seed,
                )?,
                Family::Probit => {
                    let settings = ProbitGapSettings {
                        prior_sd: model.prior_sd,
                        projection_samples: *fisher_samples,
                        fisher_samples: *fisher_samples,
                        evidence_samples: *evidence_samples,
                    };
                    runners::probit_gaps(&design.probit_design()?, sizes, ns, settings, seed)?
                }
                Family::Sbm => return Err(usage("gap limits are not available for the block model")),
            };
            Ok(runners::gap_table(&rows))
        }
        Command::Convergence { family, design, model, schedules, gammas, iterations, timing } => {
            let kinds = schedules.iter().map(|s| s.parse::<ScheduleKind>()).collect::<Result<Vec<_>, _>>()?;
            let grid: Vec<(ScheduleKind, f64)> =
                kinds.iter().flat_map(|&k| gammas.iter().map(move |&g| (k, g))).collect();
            let spec = build_model(*family, design, model, None, seed)?;
            let runs = runners::convergence_runs(spec.as_model_spec(), &grid, *iterations, seed)?;
            Ok(runners::convergence_table(&runs, *timing))
        }
        Command::Predict { design, train_size, replicates, max_size, prior_sd, per_replicate } => {
            let data = design.probit_data(seed)?;
            let order = if design.input.is_some() { FeatureOrder::Correlation } else { FeatureOrder::Given };
            let settings = PredictionSettings {
                train_size: *train_size,
                replicates: *replicates,
                max_size: *max_size,
                prior_sd: *prior_sd,
                order,
            };
            let reports = runners::prediction_study(&data, settings, seed)?;
            Ok(if *per_replicate {
                runners::prediction_table(&reports)
            } else {
                runners::prediction_summary_table(&runners::summarize_predictions(&reports))
            })
        }
    }
}

fn generate(family: Family, design: &DesignArgs, seed: u64) -> CliResult<Table> {
    Ok(match family {
        Family::Normal => {
            let mut table = Table::new(&["x"]);
            for v in design.scalar_data(family, seed)? {
                table.push(vec![v.into()]);
            }
            table
        }
        Family::Gmm => {
            let data = design.gmm_design().generate(seed)?;
            let mut table = Table::new(&["x", "label"]);
            for (x, l) in data.x.into_iter().zip(data.labels) {
                table.push(vec![x.into(), l.into()]);
            }
            table
        }
        Family::Probit => {
            let data = design.probit_data(seed)?;
            let mut columns: Vec<String> = (1..=data.x.ncols()).map(|j| format!("x{j}")).collect();
            columns.push("y".into());
            let names: Vec<&str> = columns.iter().map(String::as_str).collect();
            let mut table = Table::new(&names);
            for (i, &y) in data.y.iter().enumerate() {
                let mut row: Vec<Cell> = data.x.row(i).iter().map(|&v| v.into()).collect();
                row.push((y as usize).into());
                table.push(row);
            }
            table
        }
        Family::Sbm => {
            let adjacency = design.adjacency(seed)?;
            let mut table = Table::new(&["i", "j"]);
            for (i, row) in adjacency.iter().enumerate() {
                for (j, &a) in row.iter().enumerate().skip(i + 1) {
                    if a == 1 {
                        table.push(vec![i.into(), j.into()]);
                    }
                }
            }
            table
        }
    })
}

fn fit_one(
    family: Family,
    design: &DesignArgs,
    model: &ModelArgs,
    candidate: Option<usize>,
    evidence_samples: Option<usize>,
    seed: u64,
) -> CliResult<runners::CandidateFit> {
    Ok(match family {
        Family::Normal => {
            runners::fit_normal(&design.scalar_data(family, seed)?, model.normal_prior()?, evidence_samples, seed)?
        }
        Family::Gmm => runners::fit_gmm(
            &design.scalar_data(family, seed)?,
            candidate.unwrap_or(model.k),
            model.prior_sd,
            EmSettings::default(),
            evidence_samples,
            seed,
        )?,
        Family::Probit => {
            let data = design.probit_data(seed)?;
            let size = probit_size(candidate.or(model.features), data.x.ncols())?;
            let features: Vec<usize> = (0..size).collect();
            runners::fit_probit(
                &data.x,
                &data.y,
                &features,
                model.prior_sd,
                model.factorization()?,
                evidence_samples,
                seed,
            )?
        }
        Family::Sbm => {
            runners::fit_sbm(&design.adjacency(seed)?, candidate.unwrap_or(model.k), evidence_samples, seed)?
        }
    })
}

fn probit_size(requested: Option<usize>, p: usize) -> CliResult<usize> {
    match requested {
        None => Ok(p),
        Some(s) if (1..=p).contains(&s) => Ok(s),
        Some(s) => Err(usage(format!("model size {s} must lie in 1..={p}"))),
    }
}

/// A model usable both by CAVI and by the evidence estimator.
enum BuiltModel {
    Normal(NormalModel),
    Gmm(GmmModel),
    Probit(ProbitModel),
    Sbm(SbmModel),
}

impl BuiltModel {
    fn as_model_spec(&self) -> &dyn ModelSpec {
        match self {
            BuiltModel::Normal(m) => m,
            BuiltModel::Gmm(m) => m,
            BuiltModel::Probit(m) => m,
            BuiltModel::Sbm(m) => m,
        }
    }

    fn as_evidence_model(&self) -> &dyn EvidenceModel {
        match self {
            BuiltModel::Normal(m) => m,
            BuiltModel::Gmm(m) => m,
            BuiltModel::Probit(m) => m,
            BuiltModel::Sbm(m) => m,
        }
    }
}

fn build_model(
    family: Family,
    design: &DesignArgs,
    model: &ModelArgs,
    candidate: Option<usize>,
    seed: u64,
) -> CliResult<BuiltModel> {
    Ok(match family {
        Family::Normal => {
            BuiltModel::Normal(NormalModel::new(design.scalar_data(family, seed)?, model.normal_prior()?)?)
        }
        Family::Gmm => BuiltModel::Gmm(GmmModel::new(
            design.scalar_data(family, seed)?,
            candidate.unwrap_or(model.k),
            model.prior_sd,
        )?),
        Family::Probit => {
            let data = design.probit_data(seed)?;
            let size = probit_size(candidate.or(model.features), data.x.ncols())?;
            let features: Vec<usize> = (0..size).collect();
            BuiltModel::Probit(ProbitModel::with_isotropic_prior(
                data.x.select_columns(&features),
                data.y,
                model.prior_sd,
                model.factorization()?,
            )?)
        }
        Family::Sbm => {
            BuiltModel::Sbm(SbmModel::with_uniform_prior(design.adjacency(seed)?, candidate.unwrap_or(model.k))?)
        }
    })
}

fn evidence(family: Family, design: &DesignArgs, model: &ModelArgs, samples: usize, seed: u64) -> CliResult<Table> {
    let built = build_model(family, design, model, None, seed)?;
    let estimate = mc_evidence(built.as_evidence_model(), samples, seed)?;
    let exact = match &built {
        BuiltModel::Sbm(m) => m.exact_log_evidence().ok(),
        _ => None,
    };
    let mut table =
        Table::new(&["log_evidence", "stderr_log", "samples", "seed", "effective_sample_size", "exact_log_evidence"]);
    table.push(vec![
        estimate.log_evidence.into(),
        estimate.stderr_log.into(),
        estimate.samples.into(),
        estimate.seed.into(),
        estimate.effective_sample_size.into(),
        exact.into(),
    ]);
    Ok(table)
}
