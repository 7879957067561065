//! Coupled runs of two solutions on one noise path: the L1 contraction of
//! `(u1 - u2)^+` and the comparison principle for ordered data.

use serde::{Deserialize, Serialize};

use super::{
    divergence_criterion, monotone_within, partition, pointwise_stats, record_times, run_ensemble, sample,
    worst_rise, CriterionResult, Curve, ExperimentKind, ExperimentReport, Setup,
};
use crate::error::{Error, Result};
use crate::grid::{self, GridFunction, Norm};
use crate::noise::NoiseMode;
use crate::profiles::Profile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingParams {
    pub u1: Profile,
    pub u2: Profile,
    /// Also record `||u1 - u2||_{H^-1}` (diagnostic only).
    pub hminus: bool,
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self { u1: Profile::bump(1.0), u2: Profile::shifted_bump(1.0, 0.1), hminus: false }
    }
}

impl CouplingParams {
    /// Ordered pair `0 <= u2`, `u1 = 0` used by the comparison run.
    pub fn ordered() -> Self {
        Self { u1: Profile::Zero, u2: Profile::bump(1.0), hminus: false }
    }
}

struct GapSeries {
    gap: Vec<f64>,
    hminus: Vec<f64>,
}

struct GapEnsemble {
    times: Vec<f64>,
    initial: f64,
    completed: Vec<GapSeries>,
    report: ExperimentReport,
}

fn gap_ensemble(setup: &Setup, params: &CouplingParams, kind: ExperimentKind) -> Result<GapEnsemble> {
    setup.check()?;
    let g = setup.grid;
    let u1 = sample(&params.u1, &g)?;
    let u2 = sample(&params.u2, &g)?;
    let h = g.spacing();
    let initial = grid::positive_part_gap(h, &u1, &u2);
    let coeff = setup.coefficient()?;
    let stride = setup.solver.record_every;
    let hminus = params.hminus;
    let runs = run_ensemble(
        setup,
        &setup.solver,
        &[coeff.clone(), coeff],
        &[u1, u2],
        setup.path_offset,
        setup.paths,
        |_| GapSeries { gap: Vec::new(), hminus: Vec::new() },
        |v, acc| {
            if v.step % stride == 0 {
                acc.gap.push(grid::positive_part_gap(h, &v.states[0], &v.states[1]));
                if hminus {
                    let d: Vec<f64> = v.states[0].iter().zip(&v.states[1]).map(|(a, b)| a - b).collect();
                    acc.hminus.push(GridFunction::new(g, d)?.norm(Norm::HMinus(1.0))?);
                }
            }
            Ok(())
        },
    )?;
    let total = runs.len();
    let (completed, divergences) = partition(runs);
    let mut report = setup.report(kind);
    report.push(divergence_criterion(total, divergences.len()));
    report.divergences = divergences;
    Ok(GapEnsemble { times: record_times(&setup.solver), initial, completed, report })
}

fn push_curves(ens: &mut GapEnsemble) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    if ens.completed.is_empty() {
        return Ok(None);
    }
    let gaps: Vec<Vec<f64>> = ens.completed.iter().map(|s| s.gap.clone()).collect();
    let st = pointwise_stats(&gaps)?;
    let curve = Curve::from_stats("gap_l1", ens.times.clone(), &st);
    let out = (curve.mean.clone(), curve.stderr.clone());
    ens.report.curves.push(curve);
    if ens.completed[0].hminus.len() == ens.times.len() {
        let hm: Vec<Vec<f64>> = ens.completed.iter().map(|s| s.hminus.clone()).collect();
        ens.report.curves.push(Curve::from_stats("gap_hminus", ens.times.clone(), &pointwise_stats(&hm)?));
    }
    Ok(Some(out))
}

/// Expected L1 contraction of `(u1 - u2)^+` under shared noise.
pub fn run_contraction(setup: &Setup, params: &CouplingParams) -> Result<ExperimentReport> {
    let mut ens = gap_ensemble(setup, params, ExperimentKind::Contraction)?;
    let slack = setup.slack();
    let initial = ens.initial;
    let Some((mean, se)) = push_curves(&mut ens)? else {
        ens.report.push(CriterionResult::failed("gap_bounded", initial + slack, "no completed paths"));
        return Ok(ens.report);
    };
    let (k, excess) = mean
        .iter()
        .zip(&se)
        .map(|(m, s)| m - 2.0 * s)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, x)| if x > best.1 { (k, x) } else { best });
    ens.report.push(
        CriterionResult::at_most("gap_bounded", excess, initial + slack)
            .with_stderr(se[k])
            .with_note(format!("max over recorded t of mean - 2 SE (at t = {}); threshold is initial gap + slack", ens.times[k])),
    );
    let (rise, rise_se) = worst_rise(&mean, &se, 2.0);
    ens.report.push(
        CriterionResult::at_most("mean_non_increasing", rise, slack)
            .with_stderr(rise_se)
            .with_note("largest rise of mean - 2 SE above the running minimum"),
    );
    if setup.noise.mode == NoiseMode::Additive {
        let ok = ens
            .completed
            .iter()
            .filter(|s| monotone_within(&s.gap, slack) && s.gap.iter().all(|g| *g <= initial + slack))
            .count();
        let frac = ok as f64 / ens.completed.len() as f64;
        ens.report.push(
            CriterionResult::at_least("pathwise_non_increasing", frac, 0.99)
                .with_note(format!("{ok} of {} completed paths", ens.completed.len())),
        );
    }
    Ok(ens.report)
}

/// Comparison principle: ordered data keep `E ||(u1 - u2)^+||` within the slack.
pub fn run_comparison(setup: &Setup, params: &CouplingParams) -> Result<ExperimentReport> {
    let u1 = params.u1.sample(&setup.grid)?;
    let u2 = params.u2.sample(&setup.grid)?;
    if let Some(j) = u1.values().iter().zip(u2.values()).position(|(a, b)| a > b) {
        return Err(Error::Precondition(format!("comparison needs u1 <= u2 nodally; violated at node {}", j + 1)));
    }
    let mut ens = gap_ensemble(setup, params, ExperimentKind::Comparison)?;
    let slack = setup.slack();
    let Some((mean, se)) = push_curves(&mut ens)? else {
        ens.report.push(CriterionResult::failed("ordered_gap", slack, "no completed paths"));
        return Ok(ens.report);
    };
    let (k, worst) = mean
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, x)| if *x > best.1 { (k, *x) } else { best });
    ens.report.push(
        CriterionResult::at_most("ordered_gap", worst, slack)
            .with_stderr(se[k])
            .with_note(format!("max over recorded t of the mean gap (at t = {})", ens.times[k])),
    );
    let ok = ens.completed.iter().filter(|s| s.gap.iter().all(|g| *g <= slack)).count();
    let frac = ok as f64 / ens.completed.len() as f64;
    let c = CriterionResult::at_least("pathwise_ordered", frac, 0.99)
        .with_note(format!("{ok} of {} completed paths stay ordered within slack", ens.completed.len()));
    ens.report.push(if setup.noise.mode == NoiseMode::Additive { c } else { c.informational() });
    Ok(ens.report)
}
