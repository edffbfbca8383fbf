//! Coordinate ascent variational inference (CAVI) over any [`ModelSpec`].
//!
//! Two updating schemes are supported: the parallel (Jacobi) sweep, where every
//! parameter factor is recomputed from the previous iterate, and the sequential
//! (Gauss–Seidel) update, which re-optimizes one parameter factor at a time
//! either in a fixed cyclic order or at a uniformly random coordinate. A step
//! size `γ ∈ (0, 1]` damps each update to `[q*]^γ [q]^{1−γ}`.
//!
//! Latent factors are always refreshed to their exact coordinate optimum
//! before the parameter factors are touched: in the parallel scheme all
//! latents are recomputed from the previous parameters, in the sequential
//! scheme they are refreshed in place ahead of each coordinate update.

mod dynamics;

pub use dynamics::{gaussian_bias_step, gaussian_bias_update, GaussianDynamics};

use std::time::Instant;

use rand::Rng;

use crate::error::{usage, Error, Result};
use crate::factors::{state_kl, Factor, MeanFieldState};
use crate::par::stream_rng;

/// How latent factors are refreshed relative to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMode {
    /// Every latent factor recomputed from the previous state.
    Simultaneous,
    /// Latent factors updated one after another, each seeing the most recent values.
    InPlace,
}

/// A model family instance that CAVI can optimize.
pub trait ModelSpec: Sync {
    /// Number of parameter blocks `d` (the coordinates CAVI cycles over).
    fn parameter_blocks(&self) -> usize;

    /// Sample size `n`, used to size default iteration budgets.
    fn sample_size(&self) -> usize;

    /// Default initial state for this model.
    fn initial_state(&self, seed: u64) -> Result<MeanFieldState>;

    /// Exact CAVI optimum of parameter block `j`, holding every other factor fixed.
    fn parameter_optimum(&self, state: &MeanFieldState, j: usize) -> Result<Factor>;

    /// Replaces latent factors by their CAVI optima given the current parameter factors.
    fn refresh_latents(&self, _state: &mut MeanFieldState, _mode: LatentMode) -> Result<()> {
        Ok(())
    }

    /// `E_q[log p(data, latents, θ)] − E_q[log q]`, valid for any state.
    fn elbo(&self, state: &MeanFieldState) -> Result<f64>;

    /// Checks that `state` has the factor layout this model expects.
    fn check_state(&self, state: &MeanFieldState) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Parallel,
    SequentialRandomized,
    SequentialSystematic,
}

impl ScheduleKind {
    pub fn is_sequential(self) -> bool {
        !matches!(self, ScheduleKind::Parallel)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Parallel => "parallel",
            ScheduleKind::SequentialRandomized => "sequential_randomized",
            ScheduleKind::SequentialSystematic => "sequential_systematic",
        }
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" => Ok(ScheduleKind::Parallel),
            "sequential_randomized" | "randomized" => Ok(ScheduleKind::SequentialRandomized),
            "sequential_systematic" | "systematic" | "sequential" => Ok(ScheduleKind::SequentialSystematic),
            other => Err(usage(format!("unknown schedule kind '{other}'"))),
        }
    }
}

/// Updating scheme plus step size `γ ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    step_size: f64,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, step_size: f64) -> Result<Self> {
        if !(step_size > 0.0 && step_size <= 1.0) {
            return Err(usage(format!("step size must lie in (0, 1], got {step_size}")));
        }
        Ok(Self { kind, step_size })
    }

    pub fn parallel(step_size: f64) -> Result<Self> {
        Self::new(ScheduleKind::Parallel, step_size)
    }

    pub fn sequential_randomized(step_size: f64) -> Result<Self> {
        Self::new(ScheduleKind::SequentialRandomized, step_size)
    }

    pub fn sequential_systematic(step_size: f64) -> Result<Self> {
        Self::new(ScheduleKind::SequentialSystematic, step_size)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }
}

/// When to stop iterating.
///
/// `max_iterations` counts coordinate updates for sequential schedules and
/// sweeps for the parallel one. Convergence is declared once the ELBO changes by
/// less than `elbo_abs_tolerance` across `patience` consecutive sweeps, where a
/// sequential sweep is `d` coordinate updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub max_iterations: usize,
    pub elbo_abs_tolerance: f64,
    pub patience: usize,
}

impl StoppingRule {
    pub fn new(max_iterations: usize, elbo_abs_tolerance: f64, patience: usize) -> Result<Self> {
        if max_iterations == 0 {
            return Err(usage("max_iterations must be at least 1"));
        }
        if !(elbo_abs_tolerance >= 0.0) {
            return Err(usage("elbo_abs_tolerance must be non-negative"));
        }
        if patience == 0 {
            return Err(usage("patience must be at least 1"));
        }
        Ok(Self { max_iterations, elbo_abs_tolerance, patience })
    }

    /// Budget `default_budget(n, d, c)` with tolerance 1e-10 and patience 3.
    pub fn default_for(model: &dyn ModelSpec, kind: ScheduleKind, c: f64) -> Self {
        Self {
            max_iterations: default_budget(model.sample_size(), model.parameter_blocks(), c, kind),
            elbo_abs_tolerance: 1e-10,
            patience: 3,
        }
    }
}

/// Smallest budget ever returned by [`default_budget`].
pub const MIN_BUDGET: usize = 10;

/// Iteration budget `⌈c·d·log(nd)⌉` coordinate updates for sequential schedules,
/// `⌈c·log(nd)⌉` sweeps for the parallel one, never below [`MIN_BUDGET`].
pub fn default_budget(n: usize, d: usize, c: f64, kind: ScheduleKind) -> usize {
    let n = n.max(1) as f64;
    let d = d.max(1) as f64;
    let per_block = c * (n * d).ln();
    let raw = if kind.is_sequential() { d * per_block } else { per_block };
    (raw.ceil().max(0.0) as usize).max(MIN_BUDGET)
}

/// Per-iteration measurements of a CAVI run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace {
    /// ELBO of the initial state.
    pub initial_elbo: f64,
    pub elbo_per_iteration: Vec<f64>,
    /// `L(q̂) − L(q⁽ᵗ⁾)`, present when a reference optimum was supplied.
    pub regret_per_iteration: Option<Vec<f64>>,
    /// `KL(q⁽ᵗ⁾ ‖ q̂)`, present when a reference state was supplied.
    pub kl_to_reference: Option<Vec<f64>>,
    /// Seconds since the start of the run, per iteration.
    pub elapsed_seconds: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

impl ConvergenceTrace {
    pub fn final_elbo(&self) -> f64 {
        self.elbo_per_iteration.last().copied().unwrap_or(self.initial_elbo)
    }
}

/// Reference optimum `q̂` used for regret and KL traces.
#[derive(Debug, Clone)]
pub struct Reference {
    pub elbo: f64,
    pub state: Option<MeanFieldState>,
}

/// Factor by which regret may grow before a run is declared divergent.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// One parallel (Jacobi) sweep with step size `γ`.
///
/// Latents are refreshed from the previous parameter factors, then every
/// parameter factor is recomputed from that state simultaneously and damped.
pub fn step_parallel(model: &dyn ModelSpec, state: &MeanFieldState, gamma: f64) -> Result<MeanFieldState> {
    check_gamma(gamma)?;
    let mut next = state.clone();
    model.refresh_latents(&mut next, LatentMode::Simultaneous)?;
    let targets =
        (0..model.parameter_blocks()).map(|j| model.parameter_optimum(&next, j)).collect::<Result<Vec<_>>>()?;
    for (j, target) in targets.into_iter().enumerate() {
        next.parameter_factors[j] = state.parameter_factors[j].geometric_mix(&target, gamma)?;
    }
    Ok(next)
}

/// One sequential update of parameter block `index` with step size `γ`.
///
/// Latent factors are refreshed in place first; among the parameter factors only
/// `index` changes.
pub fn step_sequential(
    model: &dyn ModelSpec,
    state: &MeanFieldState,
    index: usize,
    gamma: f64,
) -> Result<MeanFieldState> {
    check_gamma(gamma)?;
    let d = model.parameter_blocks();
    if index >= d {
        return Err(usage(format!("block index {index} out of range for {d} blocks")));
    }
    let mut next = state.clone();
    model.refresh_latents(&mut next, LatentMode::InPlace)?;
    let target = model.parameter_optimum(&next, index)?;
    next.parameter_factors[index] = next.parameter_factors[index].geometric_mix(&target, gamma)?;
    Ok(next)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(usage(format!("step size must lie in (0, 1], got {gamma}")))
    }
}

/// Runs CAVI from `init` and returns the final state with its trace.
///
/// With a fixed `seed` the output is bit-reproducible. A non-finite ELBO, or
/// regret growing by more than [`DIVERGENCE_FACTOR`], ends the run with
/// [`Error::Diverged`] carrying the trace so far.
pub fn run_cavi(
    model: &dyn ModelSpec,
    init: MeanFieldState,
    schedule: Schedule,
    stop: StoppingRule,
    seed: u64,
) -> Result<(MeanFieldState, ConvergenceTrace)> {
    run_cavi_with_reference(model, init, schedule, stop, seed, None)
}

/// [`run_cavi`] that additionally records regret and KL against a reference optimum.
pub fn run_cavi_with_reference(
    model: &dyn ModelSpec,
    init: MeanFieldState,
    schedule: Schedule,
    stop: StoppingRule,
    seed: u64,
    reference: Option<&Reference>,
) -> Result<(MeanFieldState, ConvergenceTrace)> {
    model.check_state(&init)?;
    let d = model.parameter_blocks();
    if d == 0 {
        return Err(usage("model has no parameter blocks"));
    }
    let started = Instant::now();
    let mut rng = stream_rng(seed, 0);
    let mut state = init;
    let initial_elbo = model.elbo(&state)?;
    let mut trace = ConvergenceTrace {
        initial_elbo,
        regret_per_iteration: reference.map(|_| Vec::new()),
        kl_to_reference: reference.and_then(|r| r.state.as_ref()).map(|_| Vec::new()),
        ..Default::default()
    };
    if !initial_elbo.is_finite() {
        return Err(Error::Diverged { trace: Box::new(trace) });
    }

    let gamma = schedule.step_size();
    let sweep_len = if schedule.kind().is_sequential() { d } else { 1 };
    let initial_regret = reference.map(|r| (r.elbo - initial_elbo).max(0.0));
    let mut best_elbo = initial_elbo;
    let mut last_sweep_elbo = initial_elbo;
    let mut calm_sweeps = 0usize;

    for t in 0..stop.max_iterations {
        state = match schedule.kind() {
            ScheduleKind::Parallel => step_parallel(model, &state, gamma)?,
            ScheduleKind::SequentialSystematic => step_sequential(model, &state, t % d, gamma)?,
            ScheduleKind::SequentialRandomized => {
                let j = rng.random_range(0..d);
                step_sequential(model, &state, j, gamma)?
            }
        };
        let elbo = model.elbo(&state)?;
        trace.elbo_per_iteration.push(elbo);
        trace.elapsed_seconds.push(started.elapsed().as_secs_f64());
        trace.iterations_run = t + 1;
        if let (Some(r), Some(regrets)) = (reference, trace.regret_per_iteration.as_mut()) {
            regrets.push(r.elbo - elbo);
        }
        if let (Some(ref_state), Some(kls)) = (reference.and_then(|r| r.state.as_ref()), trace.kl_to_reference.as_mut())
        {
            kls.push(state_kl(&state, ref_state).unwrap_or(f64::NAN));
        }

        if !elbo.is_finite() || diverging(elbo, best_elbo, initial_elbo, reference, initial_regret) {
            return Err(Error::Diverged { trace: Box::new(trace) });
        }
        best_elbo = best_elbo.max(elbo);

        if (t + 1) % sweep_len == 0 {
            if (elbo - last_sweep_elbo).abs() < stop.elbo_abs_tolerance {
                calm_sweeps += 1;
                if calm_sweeps >= stop.patience {
                    trace.converged = true;
                    break;
                }
            } else {
                calm_sweeps = 0;
            }
            last_sweep_elbo = elbo;
        }
    }
    Ok((state, trace))
}

fn diverging(elbo: f64, best: f64, initial: f64, reference: Option<&Reference>, initial_regret: Option<f64>) -> bool {
    match (reference, initial_regret) {
        (Some(r), Some(d0)) => r.elbo - elbo > DIVERGENCE_FACTOR * d0.max(1e-12),
        _ => best - elbo > DIVERGENCE_FACTOR * initial.abs().max(1.0),
    }
}

/// ELBO of the reference optimum `q̂`: sequential systematic CAVI with `γ = 1`
/// for `multiplier ×` the default budget (100 by convention).
pub fn reference_optimum(
    model: &dyn ModelSpec,
    init: MeanFieldState,
    multiplier: f64,
) -> Result<(MeanFieldState, f64)> {
    let schedule = Schedule::sequential_systematic(1.0)?;
    let mut stop = StoppingRule::default_for(model, schedule.kind(), 10.0 * multiplier);
    stop.elbo_abs_tolerance = 1e-13;
    let (state, trace) = run_cavi(model, init, schedule, stop, 0)?;
    Ok((state, trace.final_elbo()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_examples() {
        assert_eq!(default_budget(1, 1, 10.0, ScheduleKind::SequentialRandomized), 10);
        assert_eq!(default_budget(100, 10, 10.0, ScheduleKind::SequentialSystematic), 691);
        assert_eq!(default_budget(1000, 5, 1.0, ScheduleKind::SequentialRandomized), 43);
        // parallel budgets count sweeps: ⌈10·log 1000⌉
        assert_eq!(default_budget(100, 10, 10.0, ScheduleKind::Parallel), 70);
    }

    #[test]
    fn schedule_and_stop_validation() {
        assert!(Schedule::parallel(0.0).is_err());
        assert!(Schedule::parallel(1.5).is_err());
        assert!(Schedule::parallel(1.0).is_ok());
        assert!(StoppingRule::new(0, 1e-10, 3).is_err());
        assert!(StoppingRule::new(5, -1.0, 3).is_err());
        assert!(StoppingRule::new(5, 1e-10, 0).is_err());
        assert_eq!("parallel".parse::<ScheduleKind>().unwrap(), ScheduleKind::Parallel);
        assert!("zigzag".parse::<ScheduleKind>().is_err());
    }
}
