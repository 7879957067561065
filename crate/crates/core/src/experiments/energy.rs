//! `L^p` energy sweep: `E sup_t ||u||_{L^p}^{pq}` and the weighted
//! dissipation `E (int int (1 + u^2)^{p/2-1} b(u) |grad u|^2)^q` across
//! initial data of growing norm.

use serde::{Deserialize, Serialize};

use super::{partition, run_ensemble, CriterionResult, ExperimentKind, ExperimentReport, Setup, Table};
use crate::diffusion::{DiffusionSpec, Regime};
use crate::error::{Error, Result};
use crate::grid::Norm;
use crate::profiles::Profile;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    pub profile: Profile,
    /// Target values of `||u0||_{L^p}`.
    pub norms: Vec<f64>,
    pub p_values: Vec<f64>,
    pub q: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self { profile: Profile::bump(1.0), norms: vec![1.0, 2.0, 4.0, 8.0], p_values: vec![2.0, 4.0], q: 1.0 }
    }
}

fn theta(d: &DiffusionSpec) -> f64 {
    match d.regime() {
        Regime::NonDegenerate { theta, .. } => theta,
        Regime::Degenerate { theta1, theta2, .. } => theta1.max(theta2),
    }
}

/// `|x|^p` with an integer fast path.
fn pow_p(x: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() < 64.0 {
        x.abs().powi(p as i32)
    } else {
        x.abs().powf(p)
    }
}

/// `h sum |u|^p`.
fn lp_pow(h: f64, u: &[f64], p: f64) -> f64 {
    h * u.iter().map(|x| pow_p(*x, p)).sum::<f64>()
}

/// `sum_j (1 + u_j^2)^{p/2-1} b(u_j) (D_-^2 + D_+^2)/2 h`, boundary nodes included.
fn weighted_dissipation(d: &DiffusionSpec, h: f64, u: &[f64], p: f64) -> f64 {
    let n = u.len();
    let e = p / 2.0 - 1.0;
    let weight = |x: f64| {
        let base = 1.0 + x * x;
        if e == 0.0 { 1.0 } else if e.fract() == 0.0 { base.powi(e as i32) } else { base.powf(e) }
    };
    let face = |f: usize| {
        let l = if f == 0 { 0.0 } else { u[f - 1] };
        let r = if f == n { 0.0 } else { u[f] };
        ((r - l) / h).powi(2)
    };
    let mut left = face(0);
    let b0 = d.b(0.0);
    let mut acc = 0.5 * left * b0;
    for j in 0..n {
        let right = face(j + 1);
        acc += weight(u[j]) * d.b(u[j]) * 0.5 * (left + right);
        left = right;
    }
    acc += 0.5 * left * b0;
    acc * h
}

struct EnergyPath {
    sup: f64,
    dissipation: f64,
}

pub fn run_energy(setup: &Setup, params: &EnergyParams) -> Result<ExperimentReport> {
    setup.check()?;
    if params.norms.len() < 2 || params.p_values.is_empty() {
        return Err(Error::InvalidArgument("energy sweep needs at least two norms and one p".into()));
    }
    if !(params.q >= 1.0) {
        return Err(Error::InvalidArgument(format!("q must be >= 1, got {}", params.q)));
    }
    let th = theta(&setup.diffusion);
    if let Some(p) = params.p_values.iter().find(|p| !(**p >= 1.0 && **p <= 2.0 * th)) {
        return Err(Error::Precondition(format!("p = {p} lies outside [1, 2 theta] = [1, {}]", 2.0 * th)));
    }
    let g = setup.grid;
    let h = g.spacing();
    let dt = setup.solver.dt;
    let q = params.q;
    let coeff = setup.coefficient()?;
    let diffusion = &setup.diffusion;
    let mut report = setup.report(ExperimentKind::Energy);
    let mut table = Table::new(
        "energy_sweep",
        &["p", "norm", "sup_mean", "sup_stderr", "dissipation_mean", "dissipation_stderr", "diverged"],
    );
    let mut diverged_total = 0usize;
    for (pi, &p) in params.p_values.iter().enumerate() {
        let mut xs = Vec::new();
        let mut sups = Vec::new();
        let mut dissip = Vec::new();
        for (ni, &norm) in params.norms.iter().enumerate() {
            let u0 = params.profile.sample_with_norm(&g, Norm::Lp(p), norm)?.into_values();
            // Disjoint path ids per sweep point.
            let start = setup.path_offset + ((pi * params.norms.len() + ni) * setup.paths) as u64;
            let runs = run_ensemble(
                setup,
                &setup.solver,
                &[coeff.clone()],
                &[u0],
                start,
                setup.paths,
                |_| EnergyPath { sup: 0.0, dissipation: 0.0 },
                |v, acc| {
                    let u = &v.states[0];
                    acc.sup = acc.sup.max(lp_pow(h, u, p));
                    if v.step > 0 {
                        acc.dissipation += dt * weighted_dissipation(diffusion, h, u, p);
                    }
                    Ok(())
                },
            )?;
            let (ok, bad) = partition(runs);
            diverged_total += bad.len();
            report.divergences.extend(bad.iter().cloned());
            if ok.is_empty() {
                table.push(vec![p, norm, f64::NAN, f64::NAN, f64::NAN, f64::NAN, bad.len() as f64]);
                continue;
            }
            let s = stats::mean_se(&ok.iter().map(|e| e.sup.powf(q)).collect::<Vec<_>>())?;
            let d = stats::mean_se(&ok.iter().map(|e| e.dissipation.powf(q)).collect::<Vec<_>>())?;
            table.push(vec![p, norm, s.mean, s.stderr, d.mean, d.stderr, bad.len() as f64]);
            xs.push(norm);
            sups.push(s.mean);
            dissip.push(d.mean);
        }
        let tag = format!("p{p}");
        let x_pow: Vec<f64> = xs.iter().map(|x| x.powf(p)).collect();
        let slope_or_fail = |name: &str, x: &[f64], y: &[f64], threshold: f64, note: &str| match stats::log_log_slope(x, y) {
            Ok(s) => CriterionResult::at_most(name, s, threshold).with_note(note.to_string()),
            Err(e) => CriterionResult::failed(name, threshold, e.to_string()),
        };
        report.push(slope_or_fail(
            &format!("sup_slope_vs_norm_pow_{tag}"),
            &x_pow,
            &sups,
            q + 0.1,
            "log-log slope of E sup ||u||_p^(pq) against ||u0||_p^p",
        ));
        report.push(slope_or_fail(
            &format!("sup_slope_vs_norm_{tag}"),
            &xs,
            &sups,
            p * q + 0.5,
            "log-log slope of E sup ||u||_p^(pq) against ||u0||_p",
        ));
        report.push(slope_or_fail(
            &format!("dissipation_slope_vs_norm_{tag}"),
            &xs,
            &dissip,
            p * q + 0.5,
            "log-log slope of the weighted dissipation moment against ||u0||_p",
        ));
    }
    report.tables.push(table);
    report.push(
        CriterionResult::at_most("diverged_paths", diverged_total as f64, 0.0).with_note("any divergence is a blow-up"),
    );
    Ok(report)
}
