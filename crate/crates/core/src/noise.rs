//! Truncated cylindrical noise `sum_i sigma_i(x, u) d beta_i` with
//! `sigma_i(x, xi) = a_i g_i(x) s(xi)`, `a_i = lambda_bar i^-q` and `g_i` the
//! Dirichlet eigenvectors.
//!
//! Increments come from a counter-based stream: ChaCha8 keyed by the seed,
//! with the path id as stream and the step index as block position. Any
//! `(seed, path, step)` can be regenerated independently of every other.

use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Grid, GridFunction};
use crate::diffusion::DiffusionSpec;
use crate::stats;
use crate::stepper::{self, Forcing, Regularization, SolverConfig, Trajectory};

/// Upper bound on the truncation so that one step's draws fit in its
/// reserved block of the stream.
pub const MAX_MODES: usize = 4096;
const WORDS_PER_STEP: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Multiplicative,
    Additive,
}

/// State dependence `s(xi)` of the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum StateProfile {
    One,
    Sin,
    Tanh,
    /// `slope * xi`; unbounded, kept for negative tests of the growth gate.
    Linear { slope: f64 },
}

impl StateProfile {
    pub fn eval(&self, xi: f64) -> f64 {
        match *self {
            StateProfile::One => 1.0,
            StateProfile::Sin => xi.sin(),
            StateProfile::Tanh => xi.tanh(),
            StateProfile::Linear { slope } => slope * xi,
        }
    }

    fn at_zero(&self) -> f64 {
        self.eval(0.0).abs()
    }

    /// `sup |s|`, infinite for the linear profile.
    pub fn sup(&self) -> f64 {
        match *self {
            StateProfile::Linear { slope } if slope != 0.0 => f64::INFINITY,
            StateProfile::Linear { .. } => 0.0,
            _ => 1.0,
        }
    }

    fn sup_derivative(&self) -> f64 {
        match *self {
            StateProfile::One => 0.0,
            StateProfile::Sin | StateProfile::Tanh => 1.0,
            StateProfile::Linear { slope } => slope.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub n_modes: usize,
    pub lambda_bar: f64,
    pub decay_q: f64,
    pub profile: StateProfile,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn additive(n_modes: usize, lambda_bar: f64, decay_q: f64, seed: u64) -> Self {
        Self { mode: NoiseMode::Additive, n_modes, lambda_bar, decay_q, profile: StateProfile::One, seed }
    }

    pub fn multiplicative(n_modes: usize, lambda_bar: f64, decay_q: f64, profile: StateProfile, seed: u64) -> Self {
        Self { mode: NoiseMode::Multiplicative, n_modes, lambda_bar, decay_q, profile, seed }
    }

    /// Noise-free spec; every increment vanishes.
    pub fn zero(seed: u64) -> Self {
        Self::additive(1, 0.0, 1.0, seed)
    }

    /// Default truncation `min(64, n)`.
    pub fn default_modes(grid: &Grid) -> usize {
        grid.n_interior().min(64)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.n_modes == 0 || self.n_modes > grid.n_interior() {
            return Err(Error::TooManyModes { requested: self.n_modes, available: grid.n_interior() });
        }
        if self.n_modes > MAX_MODES {
            return Err(Error::TooManyModes { requested: self.n_modes, available: MAX_MODES });
        }
        if !(self.lambda_bar >= 0.0 && self.lambda_bar.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda_bar must be >= 0, got {}", self.lambda_bar)));
        }
        if !(self.decay_q > 0.5) {
            return Err(Error::InvalidArgument(format!("decay_q must exceed 1/2, got {}", self.decay_q)));
        }
        if self.mode == NoiseMode::Additive && self.profile != StateProfile::One {
            return Err(Error::ModeMismatch("additive noise has no state profile".into()));
        }
        Ok(())
    }

    pub fn amplitude(&self, i: usize) -> f64 {
        self.lambda_bar * (i as f64).powf(-self.decay_q)
    }

    pub fn profile(&self) -> StateProfile {
        match self.mode {
            NoiseMode::Additive => StateProfile::One,
            NoiseMode::Multiplicative => self.profile,
        }
    }

    /// `4 sum a_i^2` over the retained modes.
    pub fn amplitude_sum(&self) -> f64 {
        4.0 * (1..=self.n_modes).map(|i| self.amplitude(i).powi(2)).sum::<f64>()
    }

    /// `sum_{i > N} a_i^2`, the energy dropped by truncation.
    pub fn truncation_tail(&self) -> f64 {
        let q2 = 2.0 * self.decay_q;
        let m = self.n_modes + 100_000;
        let head: f64 = (self.n_modes + 1..=m).map(|i| (i as f64).powf(-q2)).sum();
        let tail = (m as f64 + 0.5).powf(1.0 - q2) / (q2 - 1.0);
        self.lambda_bar.powi(2) * (head + tail)
    }

    /// Per-mode bound `mu_i >= |sigma_i(x,0)| + |d_x sigma_i| + |d_xi sigma_i|`.
    pub fn mode_bound(&self, i: usize, length: f64) -> f64 {
        let s = self.profile();
        let g_sup = (2.0 / length).sqrt();
        let dg_sup = g_sup * i as f64 * PI / length;
        let a = self.amplitude(i);
        let x_part = if dg_sup == 0.0 || s.sup() == 0.0 { 0.0 } else { dg_sup * s.sup() };
        a * (g_sup * (s.at_zero() + s.sup_derivative()) + x_part)
    }

    /// `D = 4 sum mu_i^2` for the retained modes; infinite for unbounded profiles.
    pub fn d_constant(&self, length: f64) -> f64 {
        4.0 * (1..=self.n_modes).map(|i| self.mode_bound(i, length).powi(2)).sum::<f64>()
    }
}

/// Key for one Monte Carlo path of increments `d beta_i^n ~ N(0, dt)`.
#[derive(Debug, Clone)]
pub struct NoisePath {
    seed: u64,
    path_id: u64,
    n_modes: usize,
    dt: f64,
    steps: usize,
    template: ChaCha8Rng,
}

impl NoisePath {
    pub fn new(seed: u64, path_id: u64, n_modes: usize, dt: f64, steps: usize) -> Result<Self> {
        if n_modes > MAX_MODES {
            return Err(Error::TooManyModes { requested: n_modes, available: MAX_MODES });
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let mut template = ChaCha8Rng::seed_from_u64(seed);
        template.set_stream(path_id);
        Ok(Self { seed, path_id, n_modes, dt, steps, template })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Writes `d beta_i^step`, `i = 1..N`, into `out`.
    pub fn increments_into(&self, step: usize, out: &mut [f64]) -> Result<()> {
        if step >= self.steps {
            return Err(Error::StepOutOfRange { step, steps: self.steps });
        }
        if out.len() != self.n_modes {
            return Err(Error::ShapeMismatch { expected: self.n_modes, actual: out.len() });
        }
        let mut rng = self.template.clone();
        rng.set_word_pos((step as u128) << WORDS_PER_STEP);
        let scale = self.dt.sqrt();
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z * scale;
        }
        Ok(())
    }

    pub fn increments(&self, step: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_modes];
        self.increments_into(step, &mut out)?;
        Ok(out)
    }

    /// A raw 64-bit word at the start of the step block, for replay fingerprints.
    pub fn fingerprint(&self, step: usize) -> u64 {
        let mut rng = self.template.clone();
        rng.set_word_pos((step as u128) << WORDS_PER_STEP);
        rng.next_u64()
    }
}

/// The noise coefficients evaluated on a grid.
#[derive(Debug, Clone)]
pub struct NoiseOperator {
    spec: NoiseSpec,
    grid: Grid,
    /// `basis[i * n + j] = a_{i+1} g_{i+1}(x_j)`.
    basis: Vec<f64>,
}

impl NoiseOperator {
    pub fn new(spec: NoiseSpec, grid: Grid) -> Result<Self> {
        spec.validate(&grid)?;
        let n = grid.n_interior();
        let mut basis = Vec::with_capacity(spec.n_modes * n);
        for i in 1..=spec.n_modes {
            let a = spec.amplitude(i);
            basis.extend(grid.eigenvector(i).values().iter().map(|g| a * g));
        }
        Ok(Self { spec, grid, basis })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> NoiseMode {
        self.spec.mode
    }

    pub fn n_modes(&self) -> usize {
        self.spec.n_modes
    }

    /// Path key for Monte Carlo path `path_id`.
    pub fn path(&self, path_id: u64, dt: f64, steps: usize) -> Result<NoisePath> {
        NoisePath::new(self.spec.seed, path_id, self.spec.n_modes, dt, steps)
    }

    /// `g_i(x) = sqrt(2/L) sin(i pi x / L)` at an arbitrary point.
    fn profile_at(&self, i: usize, x: f64) -> f64 {
        let l = self.grid.length();
        (2.0 / l).sqrt() * (i as f64 * PI * x / l).sin()
    }

    pub fn sigma(&self, i: usize, x: f64, xi: f64) -> f64 {
        self.spec.amplitude(i) * self.profile_at(i, x) * self.spec.profile().eval(xi)
    }

    /// `Sigma^2(x, xi) = sum_i sigma_i(x, xi)^2`.
    pub fn sigma_sq(&self, x: f64, xi: f64) -> f64 {
        (1..=self.spec.n_modes).map(|i| self.sigma(i, x, xi).powi(2)).sum()
    }

    /// `sum_i a_i g_i(x_j) d beta_i`, shared by every solution driven by the same path.
    pub fn base_field_into(&self, dbeta: &[f64], out: &mut [f64]) {
        let n = self.grid.n_interior();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, db) in dbeta.iter().enumerate() {
            if *db == 0.0 {
                continue;
            }
            let row = &self.basis[i * n..(i + 1) * n];
            for (o, g) in out.iter_mut().zip(row) {
                *o += g * db;
            }
        }
    }

    /// Scales the base field by `s(u_j)`; additive noise ignores `u`.
    pub fn apply_state(&self, u: &[f64], base: &[f64], out: &mut [f64]) {
        match self.spec.mode {
            NoiseMode::Additive => out.copy_from_slice(base),
            NoiseMode::Multiplicative => {
                let s = self.spec.profile;
                for ((o, b), x) in out.iter_mut().zip(base).zip(u) {
                    *o = s.eval(*x) * b;
                }
            }
        }
    }

    /// One Euler-Maruyama increment `sum_i sigma_i(x_j, u_j) d beta_i^step`.
    pub fn sample_increment(&self, path: &NoisePath, step: usize, u: &GridFunction) -> Result<GridFunction> {
        if u.grid() != &self.grid {
            return Err(Error::ShapeMismatch { expected: self.grid.n_interior(), actual: u.len() });
        }
        if path.n_modes() != self.spec.n_modes {
            return Err(Error::ModeMismatch(format!(
                "path carries {} modes, operator {}",
                path.n_modes(),
                self.spec.n_modes
            )));
        }
        let dbeta = path.increments(step)?;
        let n = self.grid.n_interior();
        let mut base = vec![0.0; n];
        let mut out = vec![0.0; n];
        self.base_field_into(&dbeta, &mut base);
        self.apply_state(u.values(), &base, &mut out);
        GridFunction::new(self.grid, out)
    }

    /// `||sigma(h)||_HS^2 = sum_i ||sigma_i(., h(.))||_H^2`.
    pub fn hs_norm_sq(&self, h: &[f64]) -> f64 {
        let n = self.grid.n_interior();
        let s = self.spec.profile();
        let mut acc = 0.0;
        for i in 0..self.spec.n_modes {
            let row = &self.basis[i * n..(i + 1) * n];
            acc += row.iter().zip(h).map(|(g, x)| (g * s.eval(*x)).powi(2)).sum::<f64>();
        }
        self.grid.spacing() * acc
    }

    /// Samples `||sigma(h)||_HS` on random fields and fits
    /// `||sigma(h)||_HS <= lambda ||h||_H + c (1 + ||h||_H^alpha)`.
    pub fn check_sublinear_growth(
        &self,
        lambda: f64,
        alpha: f64,
        c: f64,
        b0: f64,
        samples: usize,
        seed: u64,
    ) -> Result<GrowthReport> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
        }
        if samples < 2 {
            return Err(Error::InvalidArgument("growth check needs at least 2 samples".into()));
        }
        let n = self.grid.n_interior();
        let h = self.grid.spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut norms = Vec::with_capacity(samples);
        let mut hs = Vec::with_capacity(samples);
        let mut violations = 0usize;
        for k in 0..samples {
            let scale = 10f64.powf(-1.0 + 4.0 * k as f64 / (samples - 1) as f64);
            let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = grid::h_norm_sq(h, &raw).sqrt();
            let field: Vec<f64> = raw.iter().map(|v| v * scale / norm).collect();
            let hn = grid::h_norm_sq(h, &field).sqrt();
            let sn = self.hs_norm_sq(&field).sqrt();
            if sn > lambda * hn + c * (1.0 + hn.powf(alpha)) * (1.0 + 1e-12) {
                violations += 1;
            }
            norms.push(hn);
            hs.push(sn);
        }
        let tail = samples / 2;
        let fit = stats::linear_fit(&norms[tail..], &hs[tail..])?;
        let lambda_estimate = fit.slope.max(0.0);
        let threshold = (2.0 * self.grid.eigenvalue(1) * b0).sqrt();
        Ok(GrowthReport {
            lambda,
            alpha,
            c,
            lambda_estimate,
            threshold,
            violations,
            samples,
            gate_pass: violations == 0 && lambda < threshold && lambda_estimate < threshold,
        })
    }
}

/// Stochastic convolution `W_A`: unit diffusion, zero data, additive forcing
/// from `op`. Returns the trajectory and the running max of `||W_A||_{H^1}`
/// at every step.
pub fn stochastic_convolution(op: &NoiseOperator, path: &NoisePath, cfg: &SolverConfig) -> Result<(Trajectory, Vec<f64>)> {
    if op.mode() != NoiseMode::Additive {
        return Err(Error::ModeMismatch("stochastic convolution needs additive noise".into()));
    }
    let unit = DiffusionSpec::constant(1.0)?;
    let mut cfg = *cfg;
    cfg.regularization = Regularization::None;
    let traj = stepper::integrate(&op.grid().zeros(), &cfg, &unit, Forcing::Noise { op, path })?;
    let mut run = 0.0_f64;
    let sup = traj
        .diagnostics
        .iter()
        .map(|d| {
            run = run.max(d.h1);
            run
        })
        .collect();
    Ok((traj, sup))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub lambda: f64,
    pub alpha: f64,
    pub c: f64,
    /// Large-norm slope of `||sigma(h)||_HS` against `||h||_H`.
    pub lambda_estimate: f64,
    /// `sqrt(2 alpha_1 b0)`.
    pub threshold: f64,
    pub violations: usize,
    pub samples: usize,
    pub gate_pass: bool,
}
