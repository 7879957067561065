//! Monte Carlo experiments. Each one drives an ensemble of noise paths,
//! reduces per-path observations in path order and returns a report whose
//! criteria carry the estimate, standard error and threshold.

pub mod ball_entry;
pub mod contraction;
pub mod energy;
pub mod ergodic;
pub mod invariant;
pub mod irreducibility;
pub mod kinetic;
pub mod oracle;
pub mod report;
pub mod validation;

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionSpec, Law, Regime};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::noise::{NoiseMode, NoiseOperator, NoiseSpec};
use crate::par::{self, Execution};
use crate::stats::{self, MeanSe};
use crate::stepper::{self, Coefficient, Forcing, SolverConfig, Status, StepView, Stepper, Trajectory};

pub use report::{Comparison, CriterionResult, Curve, Divergence, ExperimentReport, Provenance, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Contraction,
    Comparison,
    Energy,
    Ergodic,
    Invariant,
    Irreducibility,
    BallEntry,
    Kinetic,
    LinearOracle,
    Validate,
    BoundaryLayer,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Contraction => "contraction",
            ExperimentKind::Comparison => "comparison",
            ExperimentKind::Energy => "energy",
            ExperimentKind::Ergodic => "ergodic",
            ExperimentKind::Invariant => "invariant",
            ExperimentKind::Irreducibility => "irreducibility",
            ExperimentKind::BallEntry => "ball_entry",
            ExperimentKind::Kinetic => "kinetic",
            ExperimentKind::LinearOracle => "linear_oracle",
            ExperimentKind::Validate => "validate",
            ExperimentKind::BoundaryLayer => "boundary_layer",
        }
    }
}

/// Everything an experiment needs besides its own parameters.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid,
    pub diffusion: DiffusionSpec,
    pub noise: NoiseSpec,
    pub solver: SolverConfig,
    pub paths: usize,
    /// First path id; ensembles use ids `path_offset..path_offset + paths`.
    pub path_offset: u64,
    /// Scheme slack is `slack_c (dt + h)`.
    pub slack_c: f64,
    pub execution: Execution,
}

impl Setup {
    pub fn new(grid: Grid, diffusion: DiffusionSpec, noise: NoiseSpec, solver: SolverConfig, paths: usize) -> Self {
        Self { grid, diffusion, noise, solver, paths, path_offset: 0, slack_c: 10.0, execution: Execution::Parallel }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn slack(&self) -> f64 {
        self.slack_c * (self.solver.dt + self.grid.spacing())
    }

    pub fn operator(&self) -> Result<NoiseOperator> {
        NoiseOperator::new(self.noise, self.grid)
    }

    pub fn check(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::InvalidArgument("at least one path is required".into()));
        }
        if !(self.slack_c >= 0.0) {
            return Err(Error::InvalidArgument(format!("slack constant must be >= 0, got {}", self.slack_c)));
        }
        self.solver.validate()?;
        self.noise.validate(&self.grid)
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: None,
            seed: self.noise.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            paths: self.paths,
            path_offset: self.path_offset,
            dt: self.solver.dt,
            h: self.grid.spacing(),
            horizon: self.solver.horizon,
            record_every: self.solver.record_every,
            slack: self.slack(),
        }
    }

    pub(crate) fn report(&self, kind: ExperimentKind) -> ExperimentReport {
        ExperimentReport::new(kind, self.provenance())
    }

    pub(crate) fn coefficient(&self) -> Result<Coefficient> {
        Coefficient::build(&self.diffusion, self.solver.regularization)
    }

    /// Errors unless the noise is additive and `b` is bounded above and below.
    pub(crate) fn require_additive_bounded(&self, what: &str) -> Result<()> {
        if self.noise.mode != NoiseMode::Additive {
            return Err(Error::Precondition(format!("{what} requires additive noise")));
        }
        self.require_bounded(what)
    }

    pub(crate) fn require_bounded(&self, what: &str) -> Result<()> {
        if !is_bounded(&self.diffusion) {
            return Err(Error::Precondition(format!(
                "{what} requires a bounded diffusion b0 <= b <= b1 (non-degenerate regime with theta = 1)"
            )));
        }
        Ok(())
    }
}

fn is_bounded(d: &DiffusionSpec) -> bool {
    match d.regime() {
        Regime::NonDegenerate { theta, .. } => theta <= 1.0,
        Regime::Degenerate { .. } => false,
    }
}

pub(crate) fn is_constant(d: &DiffusionSpec) -> Option<f64> {
    match *d.law() {
        Law::Constant { b0 } if !d.is_bypassed() => Some(b0),
        _ => None,
    }
}

/// Outcome of one path of an ensemble.
#[derive(Debug, Clone)]
pub struct PathRun<T> {
    pub id: u64,
    pub status: Status,
    pub data: T,
}

/// Drives `u0s.len()` coupled solutions on every path id in `start..start + count`.
///
/// Solution `k` uses `coeffs[k]`. `init(id)` builds the per-path accumulator,
/// `observe` sees every step (including step 0).
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_ensemble<T, I, O>(
    setup: &Setup,
    cfg: &SolverConfig,
    coeffs: &[Coefficient],
    u0s: &[Vec<f64>],
    start: u64,
    count: usize,
    init: I,
    observe: O,
) -> Result<Vec<PathRun<T>>>
where
    T: Send,
    I: Fn(u64) -> T + Sync + Send,
    O: Fn(&StepView<'_>, &mut T) -> Result<()> + Sync + Send,
{
    if coeffs.len() != u0s.len() {
        return Err(Error::ShapeMismatch { expected: u0s.len(), actual: coeffs.len() });
    }
    run_ensemble_with(setup, cfg, coeffs, |_| Ok(u0s.to_vec()), start, count, init, observe)
}

/// As [`run_ensemble`], with initial states chosen per path id.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_ensemble_with<T, S, I, O>(
    setup: &Setup,
    cfg: &SolverConfig,
    coeffs: &[Coefficient],
    states_for: S,
    start: u64,
    count: usize,
    init: I,
    observe: O,
) -> Result<Vec<PathRun<T>>>
where
    T: Send,
    S: Fn(u64) -> Result<Vec<Vec<f64>>> + Sync + Send,
    I: Fn(u64) -> T + Sync + Send,
    O: Fn(&StepView<'_>, &mut T) -> Result<()> + Sync + Send,
{
    cfg.validate()?;
    let op = NoiseOperator::new(setup.noise, setup.grid)?;
    let steps = cfg.steps();
    par::try_map_paths(setup.execution, start, count, |id| {
        let mut states = states_for(id)?;
        if states.len() != coeffs.len() {
            return Err(Error::ShapeMismatch { expected: coeffs.len(), actual: states.len() });
        }
        let mut steppers: Vec<Stepper> =
            coeffs.iter().map(|c| Stepper::with_coefficient(setup.grid, c.clone(), *cfg)).collect();
        let path = op.path(id, cfg.dt, steps)?;
        let mut data = init(id);
        let status = stepper::drive(
            &mut steppers,
            &mut states,
            Forcing::Noise { op: &op, path: &path },
            steps,
            |v| observe(v, &mut data),
        )?;
        Ok(PathRun { id, status, data })
    })
}

/// Splits runs into completed data and divergence records.
pub(crate) fn partition<T>(runs: Vec<PathRun<T>>) -> (Vec<T>, Vec<Divergence>) {
    let mut ok = Vec::with_capacity(runs.len());
    let mut bad = Vec::new();
    for r in runs {
        match r.status {
            Status::Completed => ok.push(r.data),
            Status::Diverged { step, reason } => bad.push(Divergence { path_id: r.id, step, reason }),
        }
    }
    (ok, bad)
}

/// At most 1% of paths may diverge.
pub(crate) fn divergence_criterion(total: usize, diverged: usize) -> CriterionResult {
    let frac = diverged as f64 / total.max(1) as f64;
    CriterionResult::at_most("diverged_fraction", frac, 0.01)
        .with_note(format!("{diverged} of {total} paths diverged and were excluded"))
}

/// Per-index mean and standard error across equally long series.
pub(crate) fn pointwise_stats(series: &[Vec<f64>]) -> Result<Vec<MeanSe>> {
    let len = series.first().ok_or_else(|| Error::Empty("no completed paths".into()))?.len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::ShapeMismatch { expected: len, actual: 0 });
    }
    let mut col = vec![0.0; series.len()];
    (0..len)
        .map(|k| {
            for (c, s) in col.iter_mut().zip(series) {
                *c = s[k];
            }
            stats::mean_se(&col)
        })
        .collect()
}

/// Recorded times for a run with `cfg`.
pub(crate) fn record_times(cfg: &SolverConfig) -> Vec<f64> {
    (0..=cfg.steps()).filter(|s| s % cfg.record_every == 0).map(|s| s as f64 * cfg.dt).collect()
}

/// Largest excess of `xs[k] - m se[k]` over the running minimum of the earlier entries.
pub(crate) fn worst_rise(mean: &[f64], se: &[f64], m: f64) -> (f64, f64) {
    let mut run_min = f64::INFINITY;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_se = 0.0;
    for (x, s) in mean.iter().zip(se) {
        if run_min.is_finite() {
            let rise = x - m * s - run_min;
            if rise > worst {
                worst = rise;
                worst_se = *s;
            }
        }
        run_min = run_min.min(*x);
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
    }
    (worst, worst_se)
}

/// Whether a series never rises above its running minimum by more than `slack`.
pub(crate) fn monotone_within(xs: &[f64], slack: f64) -> bool {
    let mut run_min = f64::INFINITY;
    for x in xs {
        if *x > run_min + slack {
            return false;
        }
        run_min = run_min.min(*x);
    }
    true
}

pub(crate) fn sample(profile: &crate::profiles::Profile, grid: &Grid) -> Result<Vec<f64>> {
    Ok(profile.sample(grid)?.into_values())
}

/// A single representative trajectory (path `path_offset`) for snapshot output.
pub fn representative_trajectory(setup: &Setup, u0: &GridFunction) -> Result<Trajectory> {
    setup.check()?;
    let op = setup.operator()?;
    let path = op.path(setup.path_offset, setup.solver.dt, setup.solver.steps())?;
    stepper::integrate(u0, &setup.solver, &setup.diffusion, Forcing::Noise { op: &op, path: &path })
}
