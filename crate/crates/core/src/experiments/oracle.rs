//! Exact statistics of the linear scheme. With `b = b0` and additive noise
//! each mode evolves as `c_k <- rho_k (c_k + a_k d beta_k)` with
//! `rho_k = 1 / (1 + dt b0 alpha_k)`.

use serde::{Deserialize, Serialize};

use super::{divergence_criterion, is_constant, partition, run_ensemble, sample, CriterionResult, ExperimentKind, ExperimentReport, Setup, Table};
use crate::error::{Error, Result};
use crate::grid::{self, Grid};
use crate::noise::{NoiseMode, NoiseSpec};
use crate::profiles::Profile;
use crate::stats;
use crate::stepper::{Regularization, Scheme, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    pub profile: Profile,
    /// Modes compared at the terminal time.
    pub modes: usize,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self { profile: Profile::bump(1.0), modes: 4 }
    }
}

pub fn decay_factor(grid: &Grid, b0: f64, dt: f64, k: usize) -> f64 {
    1.0 / (1.0 + dt * b0 * grid.eigenvalue(k))
}

/// Mean and variance of mode `k` after `steps` steps from coefficient `c0`.
pub fn mode_moments(grid: &Grid, b0: f64, noise: &NoiseSpec, dt: f64, steps: usize, k: usize, c0: f64) -> (f64, f64) {
    let rho = decay_factor(grid, b0, dt, k);
    let r2 = rho * rho;
    let a = if k <= noise.n_modes { noise.amplitude(k) } else { 0.0 };
    let mean = rho.powi(steps as i32) * c0;
    // a^2 dt sum_{m=1}^{steps} rho^(2m)
    let var = a * a * dt * r2 * (1.0 - r2.powi(steps as i32)) / (1.0 - r2);
    (mean, var)
}

/// Stationary `E ||u||_H^2 = sum_k rho_k^2 a_k^2 dt / (1 - rho_k^2)`.
pub fn stationary_h_norm_sq(grid: &Grid, b0: f64, noise: &NoiseSpec, dt: f64) -> f64 {
    let terms: Vec<f64> = (1..=noise.n_modes)
        .map(|k| {
            let r2 = decay_factor(grid, b0, dt, k).powi(2);
            r2 * noise.amplitude(k).powi(2) * dt / (1.0 - r2)
        })
        .collect();
    stats::pairwise_sum(&terms)
}

/// Errors unless the setup is the linear scheme with constant `b` and additive noise.
pub fn linear_b0(setup: &Setup) -> Result<f64> {
    let b0 = is_constant(&setup.diffusion)
        .ok_or_else(|| Error::Precondition("the linear oracle needs a constant diffusion".into()))?;
    if setup.noise.mode != NoiseMode::Additive {
        return Err(Error::Precondition("the linear oracle needs additive noise".into()));
    }
    let SolverConfig { scheme, regularization, .. } = setup.solver;
    if scheme != Scheme::LinearizedImplicit || regularization != Regularization::None {
        return Err(Error::Precondition("the linear oracle needs the implicit scheme without regularization".into()));
    }
    Ok(b0)
}

/// Terminal per-mode mean and variance against the exact values.
pub fn run_linear_oracle(setup: &Setup, params: &OracleParams) -> Result<ExperimentReport> {
    setup.check()?;
    let b0 = linear_b0(setup)?;
    let g = setup.grid;
    if params.modes == 0 || params.modes > g.n_interior() {
        return Err(Error::TooManyModes { requested: params.modes, available: g.n_interior() });
    }
    let u0 = sample(&params.profile, &g)?;
    let steps = setup.solver.steps();
    let modes = params.modes;
    let runs = run_ensemble(
        setup,
        &setup.solver,
        &[setup.coefficient()?],
        &[u0.clone()],
        setup.path_offset,
        setup.paths,
        |_| Vec::new(),
        |v, acc| {
            if v.step == steps {
                *acc = (1..=modes).map(|k| grid::mode_coefficient(&g, &v.states[0], k)).collect();
            }
            Ok(())
        },
    )?;
    let total = runs.len();
    let (finals, divergences) = partition(runs);
    let mut report = setup.report(ExperimentKind::LinearOracle);
    report.push(divergence_criterion(total, divergences.len()));
    report.divergences = divergences;
    if finals.len() < 2 {
        report.push(CriterionResult::failed("mode_1_mean", 3.0, "fewer than two completed paths"));
        return Ok(report);
    }
    let m = finals.len() as f64;
    let mut table = Table::new("modes", &["k", "mean", "mean_exact", "mean_se", "var", "var_exact", "var_se"]);
    for k in 1..=modes {
        let c0 = grid::mode_coefficient(&g, &u0, k);
        let (mean_exact, var_exact) = mode_moments(&g, b0, &setup.noise, setup.solver.dt, steps, k, c0);
        let xs: Vec<f64> = finals.iter().map(|f| f[k - 1]).collect();
        let ms = stats::mean_se(&xs)?;
        let var = stats::variance(&xs)?;
        let var_se = var_exact * (2.0 / (m - 1.0)).sqrt();
        report.push(
            CriterionResult::at_most(&format!("mode_{k}_mean"), (ms.mean - mean_exact).abs(), 3.0 * ms.stderr)
                .with_stderr(ms.stderr)
                .with_note(format!("|sample mean - exact| with exact = {mean_exact:e}")),
        );
        report.push(
            CriterionResult::at_most(&format!("mode_{k}_variance"), (var - var_exact).abs(), 3.0 * var_se)
                .with_stderr(var_se)
                .with_note(format!("|sample variance - exact| with exact = {var_exact:e}")),
        );
        table.push(vec![k as f64, ms.mean, mean_exact, ms.stderr, var, var_exact, var_se]);
    }
    report.tables.push(table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_reduce_to_stationary_sum() {
        let g = Grid::new(1.0, 31).unwrap();
        let noise = NoiseSpec::additive(8, 1.0, 1.0, 0);
        let dt = 1e-3;
        let total: f64 = (1..=8).map(|k| mode_moments(&g, 1.0, &noise, dt, 1_000_000, k, 1.0).1).sum();
        assert!((total - stationary_h_norm_sq(&g, 1.0, &noise, dt)).abs() < 1e-12);
        let (m, v) = mode_moments(&g, 1.0, &noise, dt, 0, 2, 0.7);
        assert_eq!((m, v), (0.7, 0.0));
    }
}
