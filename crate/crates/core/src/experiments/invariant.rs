//! Invariant-measure estimates from time averages after a burn-in, compared
//! between two independent ensembles started from different data.

use serde::{Deserialize, Serialize};

use super::oracle;
use super::{divergence_criterion, partition, run_ensemble, sample, CriterionResult, ExperimentKind, ExperimentReport, Setup, Table};
use crate::error::{Error, Result};
use crate::grid;
use crate::profiles::Profile;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvariantParams {
    pub u_a: Profile,
    pub u_b: Profile,
    pub burn_in: f64,
    /// Levels `R` of the occupation fractions of `{||u||_{H^1} > R}`.
    pub radii: Vec<f64>,
    /// Number of low-mode coefficients averaged.
    pub modes: usize,
    /// Exponent `alpha` of the sublinear part of the growth gate.
    pub growth_alpha: f64,
    pub growth_samples: usize,
}

impl Default for InvariantParams {
    fn default() -> Self {
        Self {
            u_a: Profile::bump(2.0),
            u_b: Profile::Sine { mode: 2, amplitude: -1.0 },
            burn_in: 5.0,
            radii: vec![2.0, 4.0, 8.0, 16.0],
            modes: 3,
            growth_alpha: 0.5,
            growth_samples: 200,
        }
    }
}

#[derive(Default)]
struct Averages {
    sums: Vec<f64>,
    exceed: Vec<u64>,
    samples: u64,
}

fn functional_names(params: &InvariantParams) -> Vec<String> {
    let mut names = vec!["l1".to_string(), "h_norm_sq".to_string()];
    names.extend((1..=params.modes).map(|k| format!("mode_{k}")));
    names.extend(params.radii.iter().map(|r| format!("h1_above_{r}")));
    names
}

pub fn run_invariant(setup: &Setup, params: &InvariantParams) -> Result<ExperimentReport> {
    setup.check()?;
    let b0 = setup
        .diffusion
        .b0()
        .ok_or_else(|| Error::Precondition("invariant measures need the non-degenerate regime".into()))?;
    let g = setup.grid;
    if params.modes > g.n_interior() {
        return Err(Error::TooManyModes { requested: params.modes, available: g.n_interior() });
    }
    if params.radii.len() < 2 || params.radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("occupation fit needs at least two positive radii".into()));
    }
    if !(params.burn_in >= 0.0 && params.burn_in < setup.solver.horizon) {
        return Err(Error::InvalidArgument("burn-in must lie inside the horizon".into()));
    }
    let op = setup.operator()?;
    let sigma_sup = setup.noise.profile().sup();
    let c = (setup.noise.amplitude_sum() / 4.0).sqrt() * sigma_sup;
    let growth = op.check_sublinear_growth(0.0, params.growth_alpha, c, b0, params.growth_samples, setup.noise.seed)?;
    if !growth.gate_pass {
        return Err(Error::Precondition(format!(
            "noise fails the growth gate: fitted slope {} (threshold sqrt(2 alpha_1 b0) = {}), {} violations",
            growth.lambda_estimate, growth.threshold, growth.violations
        )));
    }

    let h = g.spacing();
    let dt = setup.solver.dt;
    let burn_steps = (params.burn_in / dt).ceil() as usize;
    let modes: Vec<Vec<f64>> = (1..=params.modes).map(|k| g.eigenvector(k).into_values()).collect();
    let radii_sq: Vec<f64> = params.radii.iter().map(|r| r * r).collect();
    let n_fun = 2 + params.modes;
    let coeff = setup.coefficient()?;
    let ensemble = |profile: &Profile, start: u64| -> Result<(Vec<Averages>, Vec<super::Divergence>, usize)> {
        let u0 = sample(profile, &g)?;
        let runs = run_ensemble(
            setup,
            &setup.solver,
            &[coeff.clone()],
            &[u0],
            start,
            setup.paths,
            |_| Averages { sums: vec![0.0; n_fun], exceed: vec![0; radii_sq.len()], samples: 0 },
            |v, acc| {
                if v.step < burn_steps.max(1) {
                    return Ok(());
                }
                let u = &v.states[0];
                acc.sums[0] += grid::lp_norm(h, u, 1.0);
                acc.sums[1] += grid::h_norm_sq(h, u);
                for (s, e) in acc.sums[2..].iter_mut().zip(&modes) {
                    *s += grid::inner(h, u, e);
                }
                let h1 = grid::h1_norm_sq(h, u);
                for (c, r2) in acc.exceed.iter_mut().zip(&radii_sq) {
                    *c += u64::from(h1 > *r2);
                }
                acc.samples += 1;
                Ok(())
            },
        )?;
        let total = runs.len();
        let (ok, bad) = partition(runs);
        Ok((ok, bad, total))
    };
    let (avg_a, bad_a, total_a) = ensemble(&params.u_a, setup.path_offset)?;
    let (avg_b, bad_b, total_b) = ensemble(&params.u_b, setup.path_offset + setup.paths as u64)?;
    let mut report = setup.report(ExperimentKind::Invariant);
    report.push(divergence_criterion(total_a + total_b, bad_a.len() + bad_b.len()));
    report.divergences = bad_a.into_iter().chain(bad_b).collect();
    report.push(
        CriterionResult::at_most("growth_slope", growth.lambda_estimate, growth.threshold)
            .with_note(format!("sampled HS-norm slope; {} violations in {} samples", growth.violations, growth.samples)),
    );
    if avg_a.len() < 2 || avg_b.len() < 2 || avg_a[0].samples == 0 {
        report.push(CriterionResult::failed("agree_l1", 0.0, "not enough completed paths or samples after burn-in"));
        return Ok(report);
    }

    let per_path = |a: &Averages| -> Vec<f64> {
        let s = a.samples as f64;
        let mut v: Vec<f64> = a.sums.iter().map(|x| x / s).collect();
        v.extend(a.exceed.iter().map(|c| *c as f64 / s));
        v
    };
    let rows_a: Vec<Vec<f64>> = avg_a.iter().map(per_path).collect();
    let rows_b: Vec<Vec<f64>> = avg_b.iter().map(per_path).collect();
    let names = functional_names(params);
    let mut table = Table::new("functionals", &["index", "mean_a", "stderr_a", "mean_b", "stderr_b"]);
    for (i, name) in names.iter().enumerate() {
        let a = stats::mean_se(&rows_a.iter().map(|r| r[i]).collect::<Vec<_>>())?;
        let b = stats::mean_se(&rows_b.iter().map(|r| r[i]).collect::<Vec<_>>())?;
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        report.push(
            CriterionResult::at_most(&format!("agree_{name}"), (a.mean - b.mean).abs(), 3.0 * se)
                .with_stderr(se)
                .with_note(format!("means {:e} and {:e}", a.mean, b.mean)),
        );
        table.push(vec![i as f64, a.mean, a.stderr, b.mean, b.stderr]);
    }
    report.tables.push(table);

    let samples: u64 = avg_a.iter().chain(&avg_b).map(|a| a.samples).sum();
    let floor = 1.0 / samples as f64;
    let mut occ = Table::new("occupation", &["radius", "fraction", "count"]);
    let mut fracs = Vec::new();
    for (k, r) in params.radii.iter().enumerate() {
        let count: u64 = avg_a.iter().chain(&avg_b).map(|a| a.exceed[k]).sum();
        let frac = count as f64 / samples as f64;
        occ.push(vec![*r, frac, count as f64]);
        fracs.push(frac.max(floor));
    }
    report.tables.push(occ);
    report.push(match stats::log_log_slope(&params.radii, &fracs) {
        Ok(s) => CriterionResult::at_most("occupation_slope", s, -1.5)
            .with_note(format!("log-log slope of P(||u||_H1 > R); empty levels floored at 1/{samples}")),
        Err(e) => CriterionResult::failed("occupation_slope", -1.5, e.to_string()),
    });

    if let Ok(b0) = oracle::linear_b0(setup) {
        let exact = oracle::stationary_h_norm_sq(&g, b0, &setup.noise, dt);
        let pooled: Vec<f64> = rows_a.iter().chain(&rows_b).map(|r| r[1]).collect();
        let m = stats::mean_se(&pooled)?;
        report.push(
            CriterionResult::at_most("ou_stationary_h_norm_sq", (m.mean - exact).abs(), 3.0 * m.stderr)
                .with_stderr(m.stderr)
                .with_note(format!("time average {:e} against exact stationary value {exact:e}", m.mean)),
        );
    }
    Ok(report)
}
