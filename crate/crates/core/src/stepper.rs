//! Time stepping for `du = d_x(b(u) d_x u) dt + sigma(u) dw` with zero
//! Dirichlet data.
//!
//! The default scheme freezes the coefficient at the old state and treats the
//! diffusion implicitly, so each step is one tridiagonal solve. Noise enters
//! explicitly.

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionSpec, YosidaRegularizer, YosidaTable};
use crate::error::{Error, Result};
use crate::grid::{self, Grid, GridFunction};
use crate::noise::{NoiseOperator, NoisePath};
use crate::tridiag::Tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    LinearizedImplicit,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularization {
    None,
    Yosida { epsilon: f64 },
    Viscous { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceMean {
    Arithmetic,
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub regularization: Regularization,
    pub face_mean: FaceMean,
    pub clip_threshold: Option<f64>,
    pub record_every: usize,
    /// Track the weak-form balance against the first eigenvector.
    pub weak_residual: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::new(1e-4, 1.0)
    }
}

impl SolverConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            scheme: Scheme::LinearizedImplicit,
            regularization: Regularization::None,
            face_mean: FaceMean::Arithmetic,
            clip_threshold: None,
            record_every: 1,
            weak_residual: false,
        }
    }

    pub fn with_record_every(mut self, stride: usize) -> Self {
        self.record_every = stride;
        self
    }

    pub fn with_regularization(mut self, reg: Regularization) -> Self {
        self.regularization = reg;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_clip(mut self, threshold: f64) -> Self {
        self.clip_threshold = Some(threshold);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be >= 0, got {}", self.horizon)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        match self.regularization {
            Regularization::Yosida { epsilon } if !(epsilon > 0.0) => {
                Err(Error::InvalidArgument(format!("Yosida epsilon must be positive, got {epsilon}")))
            }
            Regularization::Viscous { tau } if !(tau > 0.0) => {
                Err(Error::InvalidArgument(format!("viscosity must be positive, got {tau}")))
            }
            _ => Ok(()),
        }
    }

    /// Number of steps, `floor(T / dt)` with a relative guard against rounding.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt * (1.0 + 1e-12)).floor() as usize
    }
}

/// The coefficient actually used by the scheme after regularization.
#[derive(Debug, Clone)]
pub enum Coefficient {
    Plain(DiffusionSpec),
    Yosida(YosidaRegularizer),
    YosidaCached(YosidaTable),
}

impl Coefficient {
    pub fn build(diffusion: &DiffusionSpec, reg: Regularization) -> Result<Self> {
        Ok(match reg {
            Regularization::None => Coefficient::Plain(diffusion.clone()),
            Regularization::Viscous { tau } => Coefficient::Plain(diffusion.viscous(tau)?),
            Regularization::Yosida { epsilon } => {
                Coefficient::Yosida(YosidaRegularizer::new(diffusion.clone(), epsilon)?)
            }
        })
    }

    /// Replaces an exact Yosida coefficient by an interpolation table on `[-range, range]`.
    pub fn cached(self, range: f64, points: usize) -> Result<Self> {
        match self {
            Coefficient::Yosida(y) => Ok(Coefficient::YosidaCached(y.table(range, points)?)),
            other => Ok(other),
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        match self {
            Coefficient::Plain(s) => Ok(s.b(r)),
            Coefficient::Yosida(y) => y.b_eps(r),
            Coefficient::YosidaCached(t) => t.b_eps(r),
        }
    }

    pub fn primitive(&self, r: f64) -> Result<f64> {
        match self {
            Coefficient::Plain(s) => s.primitive(r),
            Coefficient::Yosida(y) => y.primitive_eps(r),
            Coefficient::YosidaCached(_) => Err(Error::Precondition(
                "weak residual needs the exact Yosida primitive".into(),
            )),
        }
    }
}

/// Per-step scalar diagnostics of one solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub l1: f64,
    pub h: f64,
    pub h1: f64,
    /// `sum_f a_f (D_f u)^2 h` with the face coefficients of the step.
    pub dissipation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Completed,
    Diverged { step: usize, reason: String },
}

impl Status {
    pub fn is_completed(&self) -> bool {
        matches!(self, Status::Completed)
    }
}

/// Result of one step; divergence is reported, not raised.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Ok,
    Diverged(String),
}

/// Single-solution stepping engine with reusable work arrays.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid,
    cfg: SolverConfig,
    coeff: Coefficient,
    node_coeff: Vec<f64>,
    face: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    next: Vec<f64>,
    solver: Tridiagonal,
}

impl Stepper {
    pub fn new(grid: Grid, diffusion: &DiffusionSpec, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let coeff = Coefficient::build(diffusion, cfg.regularization)?;
        Ok(Self::with_coefficient(grid, coeff, cfg))
    }

    pub fn with_coefficient(grid: Grid, coeff: Coefficient, cfg: SolverConfig) -> Self {
        let n = grid.n_interior();
        Self {
            grid,
            cfg,
            coeff,
            node_coeff: vec![0.0; n + 2],
            face: vec![0.0; n + 1],
            lower: vec![0.0; n - 1],
            diag: vec![0.0; n],
            upper: vec![0.0; n - 1],
            rhs: vec![0.0; n],
            next: vec![0.0; n],
            solver: Tridiagonal::new(n),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn coefficient(&self) -> &Coefficient {
        &self.coeff
    }

    /// Face coefficients of the most recent step, `n + 1` entries.
    pub fn faces(&self) -> &[f64] {
        &self.face
    }

    /// Fills the face coefficients from the state `u`.
    pub fn update_faces(&mut self, u: &[f64]) -> Result<()> {
        let n = self.grid.n_interior();
        let zero = self.coeff.eval(0.0)?;
        self.node_coeff[0] = zero;
        self.node_coeff[n + 1] = zero;
        for (a, x) in self.node_coeff[1..=n].iter_mut().zip(u) {
            *a = self.coeff.eval(*x)?;
        }
        for (f, w) in self.face.iter_mut().zip(self.node_coeff.windows(2)) {
            *f = match self.cfg.face_mean {
                FaceMean::Arithmetic => 0.5 * (w[0] + w[1]),
                FaceMean::Harmonic => {
                    let s = w[0] + w[1];
                    if s == 0.0 { 0.0 } else { 2.0 * w[0] * w[1] / s }
                }
            };
        }
        Ok(())
    }

    /// `sum_f a_f (D_f u)^2 h` for the current face coefficients.
    pub fn dissipation(&self, u: &[f64]) -> f64 {
        weighted_gradient_sq(self.grid.spacing(), &self.face, u)
    }

    /// Advances `u` by one step in place with the given noise increment.
    pub fn advance(&mut self, u: &mut [f64], increment: &[f64]) -> Result<StepOutcome> {
        let n = self.grid.n_interior();
        if u.len() != n || increment.len() != n {
            return Err(Error::ShapeMismatch { expected: n, actual: u.len().min(increment.len()) });
        }
        self.update_faces(u)?;
        let h = self.grid.spacing();
        let r = self.cfg.dt / (h * h);
        match self.cfg.scheme {
            Scheme::LinearizedImplicit => {
                for j in 0..n {
                    self.diag[j] = 1.0 + r * (self.face[j] + self.face[j + 1]);
                    self.rhs[j] = u[j] + increment[j];
                }
                for j in 0..n - 1 {
                    self.lower[j] = -r * self.face[j + 1];
                    self.upper[j] = -r * self.face[j + 1];
                }
                if let Err(e) = self.solver.solve(&self.lower, &self.diag, &self.upper, &self.rhs, &mut self.next) {
                    return Ok(StepOutcome::Diverged(e.to_string()));
                }
            }
            Scheme::Explicit => {
                let max_face = self.face.iter().fold(0.0_f64, |m, a| m.max(*a));
                if r * max_face > 0.5 {
                    return Ok(StepOutcome::Diverged(format!(
                        "explicit step violates dt max(b) / h^2 <= 1/2 ({})",
                        r * max_face
                    )));
                }
                for j in 0..n {
                    let left = if j == 0 { 0.0 } else { u[j - 1] };
                    let right = if j + 1 == n { 0.0 } else { u[j + 1] };
                    let flux = self.face[j + 1] * (right - u[j]) - self.face[j] * (u[j] - left);
                    self.next[j] = u[j] + r * flux + increment[j];
                }
            }
        }
        if let Some(i) = self.next.iter().position(|v| !v.is_finite()) {
            return Ok(StepOutcome::Diverged(format!("non-finite value at node {}", i + 1)));
        }
        if let Some(limit) = self.cfg.clip_threshold {
            if let Some(i) = self.next.iter().position(|v| v.abs() > limit) {
                return Ok(StepOutcome::Diverged(format!(
                    "|u| = {} exceeds clip threshold {limit} at node {}",
                    self.next[i].abs(),
                    i + 1
                )));
            }
        }
        u.copy_from_slice(&self.next);
        Ok(StepOutcome::Ok)
    }
}

/// `sum over faces of a_f ((u_{j+1} - u_j)/h)^2 h`, boundary values zero.
pub fn weighted_gradient_sq(h: f64, faces: &[f64], u: &[f64]) -> f64 {
    let n = u.len();
    let mut acc = 0.0;
    for (f, a) in faces.iter().enumerate() {
        let left = if f == 0 { 0.0 } else { u[f - 1] };
        let right = if f == n { 0.0 } else { u[f] };
        let d = right - left;
        acc += a * d * d;
    }
    acc / h
}

/// Source of noise increments for a run.
#[derive(Debug, Clone, Copy)]
pub enum Forcing<'a> {
    None,
    Noise { op: &'a NoiseOperator, path: &'a NoisePath },
}

/// Everything an observer may inspect after a step.
pub struct StepView<'a> {
    pub step: usize,
    pub t: f64,
    pub states: &'a [Vec<f64>],
    pub steppers: &'a [Stepper],
    /// Per-solution noise increments applied during this step (zero at step 0).
    pub increments: &'a [Vec<f64>],
}

/// Advances several solutions on one shared noise path.
///
/// All solutions see the same `d beta` each step; multiplicative increments
/// still differ through `s(u_k)`. `observe` runs once before the first step
/// (with `step = 0`) and after every step. The run stops at the first
/// divergence of any solution.
pub fn drive<F>(
    steppers: &mut [Stepper],
    states: &mut [Vec<f64>],
    forcing: Forcing<'_>,
    steps: usize,
    mut observe: F,
) -> Result<Status>
where
    F: FnMut(&StepView<'_>) -> Result<()>,
{
    if steppers.len() != states.len() || steppers.is_empty() {
        return Err(Error::ShapeMismatch { expected: steppers.len(), actual: states.len() });
    }
    let grid = *steppers[0].grid();
    let n = grid.n_interior();
    if steppers.iter().any(|s| s.grid() != &grid) || states.iter().any(|u| u.len() != n) {
        return Err(Error::ShapeMismatch { expected: n, actual: states[0].len() });
    }
    let dt = steppers[0].config().dt;
    let mut dbeta = Vec::new();
    let mut base = vec![0.0; n];
    if let Forcing::Noise { op, path } = forcing {
        if op.grid() != &grid {
            return Err(Error::ShapeMismatch { expected: n, actual: op.grid().n_interior() });
        }
        if path.n_modes() != op.n_modes() {
            return Err(Error::ModeMismatch(format!("path has {} modes, operator {}", path.n_modes(), op.n_modes())));
        }
        if path.steps() < steps {
            return Err(Error::StepOutOfRange { step: steps, steps: path.steps() });
        }
        dbeta = vec![0.0; path.n_modes()];
    }
    let mut incs = vec![vec![0.0; n]; states.len()];
    let multi = states.len() > 1;
    for (s, u) in steppers.iter_mut().zip(states.iter()) {
        s.update_faces(u)?;
    }
    observe(&StepView { step: 0, t: 0.0, states, steppers, increments: &incs })?;
    for step in 0..steps {
        if let Forcing::Noise { op, path } = forcing {
            path.increments_into(step, &mut dbeta)?;
            op.base_field_into(&dbeta, &mut base);
            for (inc, u) in incs.iter_mut().zip(states.iter()) {
                op.apply_state(u, &base, inc);
            }
        }
        for (k, (s, u)) in steppers.iter_mut().zip(states.iter_mut()).enumerate() {
            if let StepOutcome::Diverged(reason) = s.advance(u, &incs[k])? {
                let reason = if multi { format!("solution {k}: {reason}") } else { reason };
                return Ok(Status::Diverged { step: step + 1, reason });
            }
        }
        let t = (step + 1) as f64 * dt;
        observe(&StepView { step: step + 1, t, states, steppers, increments: &incs })?;
    }
    Ok(Status::Completed)
}

/// Time-indexed snapshots with per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Grid,
    pub dt: f64,
    pub record_every: usize,
    pub times: Vec<f64>,
    pub snapshots: Vec<GridFunction>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub status: Status,
    /// `(seed, path_id)` of the driving noise, if any.
    pub noise_key: Option<(u64, u64)>,
    /// Weak-form balance against `e_1` at the final time.
    pub weak_residual: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &GridFunction {
        self.snapshots.last().expect("trajectory always holds the initial state")
    }
}

struct Recorder {
    grid: Grid,
    stride: usize,
    times: Vec<f64>,
    snapshots: Vec<GridFunction>,
    diagnostics: Vec<StepDiagnostics>,
    weak: Option<WeakBalance>,
}

struct WeakBalance {
    phi: Vec<f64>,
    dphi: Vec<f64>,
    initial: f64,
    flux: f64,
    noise: f64,
    prim: Vec<f64>,
}

impl WeakBalance {
    fn new(grid: &Grid, u0: &[f64]) -> Self {
        let phi = grid.eigenvector(1).into_values();
        let n = phi.len();
        let dphi = (0..=n)
            .map(|f| {
                let l = if f == 0 { 0.0 } else { phi[f - 1] };
                let r = if f == n { 0.0 } else { phi[f] };
                (r - l) / grid.spacing()
            })
            .collect();
        let initial = grid::inner(grid.spacing(), &phi, u0);
        Self { phi, dphi, initial, flux: 0.0, noise: 0.0, prim: vec![0.0; n + 2] }
    }

    fn record(&mut self, grid: &Grid, coeff: &Coefficient, u: &[f64], inc: &[f64], dt: f64) -> Result<()> {
        let h = grid.spacing();
        let n = u.len();
        for (p, x) in self.prim[1..=n].iter_mut().zip(u) {
            *p = coeff.primitive(*x)?;
        }
        let mut acc = 0.0;
        for (f, w) in self.prim.windows(2).enumerate() {
            acc += (w[1] - w[0]) / h * self.dphi[f];
        }
        self.flux += dt * h * acc;
        self.noise += grid::inner(h, &self.phi, inc);
        Ok(())
    }

    fn residual(&self, grid: &Grid, u: &[f64]) -> f64 {
        grid::inner(grid.spacing(), &self.phi, u) - self.initial + self.flux - self.noise
    }
}

impl Recorder {
    fn new(grid: Grid, stride: usize, weak: bool, u0: &[f64]) -> Self {
        Self {
            grid,
            stride,
            times: Vec::new(),
            snapshots: Vec::new(),
            diagnostics: Vec::new(),
            weak: weak.then(|| WeakBalance::new(&grid, u0)),
        }
    }

    fn observe(&mut self, step: usize, t: f64, u: &[f64], stepper: &Stepper, inc: &[f64]) -> Result<()> {
        let h = self.grid.spacing();
        self.diagnostics.push(StepDiagnostics {
            step,
            t,
            l1: grid::lp_norm(h, u, 1.0),
            h: grid::h_norm_sq(h, u).sqrt(),
            h1: grid::h1_norm_sq(h, u).sqrt(),
            dissipation: stepper.dissipation(u),
        });
        if step % self.stride == 0 {
            self.times.push(t);
            self.snapshots.push(GridFunction::new(self.grid, u.to_vec())?);
        }
        if step > 0 {
            if let Some(w) = self.weak.as_mut() {
                w.record(&self.grid, stepper.coefficient(), u, inc, stepper.config().dt)?;
            }
        }
        Ok(())
    }

    fn finish(self, dt: f64, status: Status, noise_key: Option<(u64, u64)>, last: &[f64]) -> Trajectory {
        let weak_residual = self.weak.as_ref().map(|w| w.residual(&self.grid, last));
        Trajectory {
            grid: self.grid,
            dt,
            record_every: self.stride,
            times: self.times,
            snapshots: self.snapshots,
            diagnostics: self.diagnostics,
            status,
            noise_key,
            weak_residual,
        }
    }
}

fn noise_key(forcing: Forcing<'_>) -> Option<(u64, u64)> {
    match forcing {
        Forcing::None => None,
        Forcing::Noise { path, .. } => Some((path.seed(), path.path_id())),
    }
}

/// One step from `u` with a given increment.
pub fn step(
    u: &GridFunction,
    cfg: &SolverConfig,
    diffusion: &DiffusionSpec,
    increment: &GridFunction,
) -> Result<(GridFunction, StepOutcome)> {
    if u.grid() != increment.grid() {
        return Err(Error::ShapeMismatch { expected: u.len(), actual: increment.len() });
    }
    let mut s = Stepper::new(*u.grid(), diffusion, *cfg)?;
    let mut v = u.values().to_vec();
    let outcome = s.advance(&mut v, increment.values())?;
    Ok((GridFunction::new(*u.grid(), v)?, outcome))
}

/// Integrates one solution over `[0, T]`.
pub fn integrate(
    u0: &GridFunction,
    cfg: &SolverConfig,
    diffusion: &DiffusionSpec,
    forcing: Forcing<'_>,
) -> Result<Trajectory> {
    let mut out = integrate_coupled(std::slice::from_ref(u0), cfg, diffusion, forcing)?;
    Ok(out.remove(0))
}

/// Integrates several solutions on one shared noise path.
pub fn integrate_coupled(
    u0s: &[GridFunction],
    cfg: &SolverConfig,
    diffusion: &DiffusionSpec,
    forcing: Forcing<'_>,
) -> Result<Vec<Trajectory>> {
    let first = u0s.first().ok_or_else(|| Error::Empty("no initial data".into()))?;
    let grid = *first.grid();
    if u0s.iter().any(|u| u.grid() != &grid) {
        return Err(Error::ShapeMismatch { expected: grid.n_interior(), actual: 0 });
    }
    let mut steppers = u0s
        .iter()
        .map(|_| Stepper::new(grid, diffusion, *cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut states: Vec<Vec<f64>> = u0s.iter().map(|u| u.values().to_vec()).collect();
    let mut recorders: Vec<Recorder> = u0s
        .iter()
        .map(|u| Recorder::new(grid, cfg.record_every, cfg.weak_residual, u.values()))
        .collect();
    let status = drive(&mut steppers, &mut states, forcing, cfg.steps(), |view| {
        for (k, rec) in recorders.iter_mut().enumerate() {
            rec.observe(view.step, view.t, &view.states[k], &view.steppers[k], &view.increments[k])?;
        }
        Ok(())
    })?;
    let key = noise_key(forcing);
    Ok(recorders
        .into_iter()
        .zip(&states)
        .map(|(r, u)| r.finish(cfg.dt, status.clone(), key, u))
        .collect())
}
