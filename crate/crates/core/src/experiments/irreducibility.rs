//! Small-ball reachability: `u^z` and the stochastic convolution `W_A` run on
//! the same path, and success `||u^z(T)||_H < eps` should be likelier when
//! `sup ||W_A||_{H^1}` is small.

use serde::{Deserialize, Serialize};

use super::{divergence_criterion, partition, run_ensemble_with, Comparison, CriterionResult, ExperimentKind, ExperimentReport, Setup, Table};
use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};
use crate::grid::{self, Norm};
use crate::profiles::Profile;
use crate::stats;
use crate::stepper::{Coefficient, Regularization};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrreducibilityParams {
    /// Shape of `z`; rescaled per path so that `||z||_H` sweeps `(0, m_ball)`.
    pub z_profile: Profile,
    pub m_ball: f64,
    pub epsilon: f64,
    /// Quantile bins of `sup ||W_A||_{H^1}` in the conditional table.
    pub bins: usize,
}

impl Default for IrreducibilityParams {
    fn default() -> Self {
        Self { z_profile: Profile::bump(1.0), m_ball: 4.0, epsilon: 0.25, bins: 5 }
    }
}

struct Sample {
    z_norm: f64,
    sup_wa: f64,
    final_sq: f64,
}

pub fn run_irreducibility(setup: &Setup, params: &IrreducibilityParams) -> Result<ExperimentReport> {
    setup.check()?;
    setup.require_additive_bounded("irreducibility")?;
    if !(params.m_ball > 0.0 && params.epsilon > 0.0) || params.bins == 0 {
        return Err(Error::InvalidArgument("need m_ball > 0, epsilon > 0 and at least one bin".into()));
    }
    let g = setup.grid;
    let h = g.spacing();
    let steps = setup.solver.steps();
    let m = setup.paths;
    let start = setup.path_offset;
    let z_shape = params.z_profile.sample_with_norm(&g, Norm::Lp(2.0), 1.0)?.into_values();
    let unit = Coefficient::build(&DiffusionSpec::constant(1.0)?, Regularization::None)?;
    let coeffs = [setup.coefficient()?, unit];
    let z_norm = |id: u64| params.m_ball * ((id - start) as f64 + 0.5) / m as f64;
    let runs = run_ensemble_with(
        setup,
        &setup.solver,
        &coeffs,
        |id| Ok(vec![z_shape.iter().map(|v| v * z_norm(id)).collect(), vec![0.0; g.n_interior()]]),
        start,
        m,
        |id| Sample { z_norm: z_norm(id), sup_wa: 0.0, final_sq: f64::NAN },
        |v, acc| {
            acc.sup_wa = acc.sup_wa.max(grid::h1_norm_sq(h, &v.states[1]).sqrt());
            if v.step == steps {
                acc.final_sq = grid::h_norm_sq(h, &v.states[0]);
            }
            Ok(())
        },
    )?;
    let total = runs.len();
    let (samples, divergences) = partition(runs);
    let mut report = setup.report(ExperimentKind::Irreducibility);
    report.push(divergence_criterion(total, divergences.len()));
    report.divergences = divergences;
    if samples.len() < 3 {
        report.push(CriterionResult::failed("success_fraction", 0.0, "fewer than three completed paths"));
        return Ok(report);
    }
    let eps_sq = params.epsilon * params.epsilon;
    let success: Vec<f64> = samples.iter().map(|s| f64::from(u8::from(s.final_sq < eps_sq))).collect();
    let sup: Vec<f64> = samples.iter().map(|s| s.sup_wa).collect();
    let frac = stats::mean(&success)?;
    report.push(
        CriterionResult::new("success_fraction", frac, Comparison::Above, 0.0)
            .with_note(format!("fraction of paths with ||u^z(T)||_H < {}", params.epsilon)),
    );
    match stats::spearman(&sup, &success) {
        Ok(rc) => {
            report.push(
                CriterionResult::new("rank_correlation", rc.rho, Comparison::Below, 0.0)
                    .with_note("Spearman rho between sup ||W_A||_H1 and success"),
            );
            report.push(CriterionResult::new("rank_correlation_p_value", rc.p_value, Comparison::Below, 0.01));
        }
        Err(e) => report.push(CriterionResult::failed("rank_correlation", 0.0, e.to_string())),
    }

    let mut scatter = Table::new("scatter", &["z_norm", "sup_wa_h1", "final_h_norm_sq", "success"]);
    for (s, ok) in samples.iter().zip(&success) {
        scatter.push(vec![s.z_norm, s.sup_wa, s.final_sq, *ok]);
    }
    report.tables.push(scatter);
    // P(success | sup W_A <= delta) for quantile levels delta.
    let mut cond = Table::new("conditional", &["delta", "probability", "stderr", "count"]);
    for b in 1..=params.bins {
        let delta = stats::quantile(&sup, b as f64 / params.bins as f64)?;
        let sel: Vec<f64> = sup.iter().zip(&success).filter(|(s, _)| **s <= delta).map(|(_, k)| *k).collect();
        let ms = stats::mean_se(&sel)?;
        cond.push(vec![delta, ms.mean, ms.stderr, sel.len() as f64]);
    }
    report.tables.push(cond);
    Ok(report)
}
