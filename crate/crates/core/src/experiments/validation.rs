//! Deterministic checks: Yosida properties on random samples, boundary-layer
//! cutoffs against the closed form, and the sampled hypotheses of a setup.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CriterionResult, ExperimentKind, ExperimentReport, Setup, Table};
use crate::boundary_layer::{self, closed_form_error};
use crate::diffusion::{DiffusionSpec, YosidaRegularizer};
use crate::error::Result;
use crate::noise::NoiseMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateParams {
    /// Sampling half-range for the growth and Hölder checks.
    pub range: f64,
    pub samples: usize,
    pub yosida_samples: usize,
    pub yosida_seed: u64,
    pub growth_samples: usize,
}

impl Default for ValidateParams {
    fn default() -> Self {
        Self { range: 10.0, samples: 4001, yosida_samples: 10_000, yosida_seed: 7, growth_samples: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryLayerParams {
    /// Deltas compared against the closed form.
    pub deltas: Vec<f64>,
    /// Error budget in units of `h^2`.
    pub error_factor: f64,
    /// Decreasing deltas for the flux limit with `phi(x) = x`.
    pub flux_deltas: Vec<f64>,
    pub flux_tolerance: f64,
}

impl Default for BoundaryLayerParams {
    fn default() -> Self {
        Self { deltas: vec![0.2, 0.1, 0.05], error_factor: 5.0, flux_deltas: vec![0.1, 0.05, 0.02, 0.01], flux_tolerance: 0.02 }
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct YosidaViolations {
    pub residual: usize,
    pub contraction: usize,
    pub b_eps_bounds: usize,
    pub b_tilde_eps: usize,
    pub displacement: usize,
    pub solver_failures: usize,
}

/// Checks the resolvent properties on `samples` random `(r, eps)` pairs.
///
/// `|r|` is log-uniform on `[1e-3, 1e2]` with a random sign, `eps` log-uniform on `[1e-4, 1]`.
pub fn yosida_violations(spec: &DiffusionSpec, samples: usize, seed: u64) -> Result<YosidaViolations> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = YosidaViolations::default();
    let draw_r = |rng: &mut ChaCha8Rng| {
        let mag = 10f64.powf(rng.random_range(-3.0..2.0));
        if rng.random::<bool>() { mag } else { -mag }
    };
    for _ in 0..samples {
        let eps = 10f64.powf(rng.random_range(-4.0..0.0));
        let r1 = draw_r(&mut rng);
        let r2 = draw_r(&mut rng);
        let y = YosidaRegularizer::new(spec.clone(), eps)?;
        let tol = y.tolerance();
        let (j1, j2) = match (y.resolvent(r1), y.resolvent(r2)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                v.solver_failures += 1;
                continue;
            }
        };
        let scale = r1.abs().max(1.0);
        if y.residual(j1, r1)?.abs() > tol * scale {
            v.residual += 1;
        }
        if (j1 - j2).abs() > (r1 - r2).abs() + 2.0 * tol * r1.abs().max(r2.abs()).max(1.0) {
            v.contraction += 1;
        }
        let b0 = y.b0();
        let be = y.b_eps(r1)?;
        let rel = 1e-12 * (b0 + 2.0 / eps);
        if !(be >= b0 - rel && be <= b0 + 2.0 / eps + rel) {
            v.b_eps_bounds += 1;
        }
        let bte = y.b_tilde_eps(r1)?;
        let bt = y.b_tilde(r1)?;
        if bte.abs() > bt.abs() * (1.0 + 1e-12) + tol * scale {
            v.b_tilde_eps += 1;
        }
        if (j1 - r1).abs() > eps * bte.abs() + tol * scale {
            v.displacement += 1;
        }
    }
    Ok(v)
}

/// Yosida property suite over several diffusion laws.
pub fn run_yosida_suite(setup: &Setup, specs: &[(String, DiffusionSpec)], samples: usize, seed: u64) -> Result<ExperimentReport> {
    let mut report = setup.report(ExperimentKind::Validate);
    let mut table = Table::new(
        "yosida_violations",
        &["law", "residual", "contraction", "b_eps_bounds", "b_tilde_eps", "displacement", "solver_failures"],
    );
    for (k, (name, spec)) in specs.iter().enumerate() {
        let v = yosida_violations(spec, samples, seed.wrapping_add(k as u64))?;
        let checks = [
            ("residual", v.residual),
            ("contraction", v.contraction),
            ("b_eps_bounds", v.b_eps_bounds),
            ("b_tilde_eps", v.b_tilde_eps),
            ("displacement", v.displacement),
            ("solver_failures", v.solver_failures),
        ];
        for (what, count) in checks {
            report.push(
                CriterionResult::at_most(&format!("yosida_{what}_{name}"), count as f64, 0.0)
                    .with_note(format!("violations in {samples} samples")),
            );
        }
        let mut row = vec![k as f64];
        row.extend(checks.iter().map(|(_, c)| *c as f64));
        table.push(row);
    }
    report.tables.push(table);
    report.notes.push(format!(
        "law index: {}",
        specs.iter().enumerate().map(|(k, (n, _))| format!("{k} = {n}")).collect::<Vec<_>>().join(", ")
    ));
    Ok(report)
}

/// Boundary-layer cutoffs on the setup grid.
pub fn run_boundary_layer(setup: &Setup, params: &BoundaryLayerParams) -> Result<ExperimentReport> {
    let g = setup.grid;
    let h2 = g.spacing().powi(2);
    let mut report = setup.report(ExperimentKind::BoundaryLayer);
    let mut table = Table::new("closed_form", &["delta", "max_error", "error_over_h2", "residual"]);
    for &d in &params.deltas {
        let layer = boundary_layer::solve_zeta(&g, d)?;
        let err = closed_form_error(&layer);
        table.push(vec![d, err, err / h2, layer.residual]);
        report.push(
            CriterionResult::at_most(&format!("closed_form_error_delta_{d}"), err, params.error_factor * h2)
                .with_note(format!("{:.3} h^2", err / h2)),
        );
        let outside = layer.zeta.values().iter().filter(|z| !(0.0..=1.0).contains(*z)).count();
        report.push(CriterionResult::at_most(&format!("bounds_delta_{d}"), outside as f64, 0.0).with_note("nodes outside [0, 1]"));
        let lap = layer.laplacian()?;
        let max_lap = lap.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        report.push(CriterionResult::at_most(&format!("superharmonic_delta_{d}"), max_lap, 0.0).with_note("max nodal second difference"));
    }
    report.tables.push(table);
    if params.flux_deltas.len() >= 2 {
        let flux = boundary_layer::flux_limit_check(&g, |x| x, &params.flux_deltas)?;
        let mut ft = Table::new("flux", &["delta", "flux"]);
        for (d, v) in flux.deltas.iter().zip(&flux.values) {
            ft.push(vec![*d, *v]);
        }
        report.tables.push(ft);
        report.push(
            CriterionResult::at_most("flux_limit_extrapolated", flux.relative_error_extrapolated, params.flux_tolerance)
                .with_note(format!("limit estimate {} against {}", flux.extrapolated_limit, flux.target)),
        );
        report.push(
            CriterionResult::at_most("flux_limit_raw", flux.relative_error_raw, params.flux_tolerance)
                .informational()
                .with_note(format!("value {} at the smallest delta", flux.raw_limit)),
        );
    }
    Ok(report)
}

/// Sampled hypotheses of the configured diffusion and noise.
pub fn run_validate(setup: &Setup, params: &ValidateParams) -> Result<ExperimentReport> {
    setup.check()?;
    let hyp = setup.diffusion.validate_hypotheses(params.range, params.samples)?;
    let mut report = if setup.diffusion.b0().is_some() {
        run_yosida_suite(setup, &[("configured".into(), setup.diffusion.clone())], params.yosida_samples, params.yosida_seed)?
    } else {
        setup.report(ExperimentKind::Validate)
    };
    report.push(
        CriterionResult::at_most("growth_violations", hyp.growth_violation_count as f64, 0.0)
            .with_note(format!("samples of b outside the regime bounds on [-{0}, {0}]", params.range)),
    );
    report.push(CriterionResult::at_least("positive", f64::from(u8::from(hyp.positive)), 1.0));
    report.push(
        CriterionResult::at_most("holder_constant_growth", hyp.holder.constant_fine, 1.05 * hyp.holder.constant_coarse + 1e-12)
            .with_note(format!("sqrt(b) Hölder exponent {}", hyp.holder.gamma)),
    );
    let d = setup.noise.d_constant(setup.grid.length());
    report.push(CriterionResult::at_most("noise_d_constant", d, f64::INFINITY).informational().with_note(format!(
        "truncation tail {:e}, 4 sum a_i^2 = {:e}",
        setup.noise.truncation_tail(),
        setup.noise.amplitude_sum()
    )));
    if let Some(b0) = setup.diffusion.b0() {
        let op = setup.operator()?;
        let c = (setup.noise.amplitude_sum() / 4.0).sqrt() * setup.noise.profile().sup();
        let g = op.check_sublinear_growth(0.0, 0.5, c, b0, params.growth_samples, setup.noise.seed)?;
        let crit = CriterionResult::at_most("noise_growth_slope", g.lambda_estimate, g.threshold)
            .with_note(format!("{} bound violations in {} samples", g.violations, g.samples));
        report.push(if setup.noise.mode == NoiseMode::Additive { crit } else { crit.informational() });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_yosida_violations_for_shipped_laws() {
        for spec in [DiffusionSpec::constant(1.0).unwrap(), DiffusionSpec::porous_floor(1.0, 1.0, 3.0).unwrap()] {
            assert_eq!(yosida_violations(&spec, 500, 1).unwrap(), YosidaViolations::default());
        }
    }
}
