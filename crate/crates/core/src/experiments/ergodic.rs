//! Long-horizon coupling: with additive noise and bounded `b` the L1 gap of
//! two solutions driven by one path goes to zero almost surely.

use serde::{Deserialize, Serialize};

use super::{
    divergence_criterion, monotone_within, partition, pointwise_stats, record_times, run_ensemble, sample,
    worst_rise, CriterionResult, Curve, ExperimentKind, ExperimentReport, Setup,
};
use crate::error::{Error, Result};
use crate::grid;
use crate::noise::NoiseMode;
use crate::profiles::Profile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicParams {
    pub u1: Profile,
    pub u2: Profile,
    /// Runs with multiplicative noise, asserting only the mean monotonicity.
    pub negative_control: bool,
    /// Terminal gap must fall below this fraction of the initial gap.
    pub terminal_fraction: f64,
    /// Fraction of paths that must reach the terminal threshold.
    pub required_paths: f64,
}

impl Default for ErgodicParams {
    fn default() -> Self {
        Self {
            u1: Profile::TwoBump { height: 1.0 },
            u2: Profile::Constant { value: 0.5 },
            negative_control: false,
            terminal_fraction: 0.01,
            required_paths: 0.95,
        }
    }
}

pub fn run_ergodic(setup: &Setup, params: &ErgodicParams) -> Result<ExperimentReport> {
    setup.check()?;
    let scope = setup.noise.mode == NoiseMode::Additive;
    if scope {
        setup.require_bounded("ergodic coupling")?;
    } else if !params.negative_control {
        return Err(Error::Precondition(
            "ergodic coupling requires additive noise and a bounded diffusion; set negative_control to run it anyway"
                .into(),
        ));
    }
    let g = setup.grid;
    let h = g.spacing();
    let u1 = sample(&params.u1, &g)?;
    let u2 = sample(&params.u2, &g)?;
    let initial = grid::l1_distance(h, &u1, &u2);
    if initial == 0.0 {
        return Err(Error::Precondition("ergodic coupling needs distinct initial data".into()));
    }
    let stride = setup.solver.record_every;
    let coeff = setup.coefficient()?;
    let runs = run_ensemble(
        setup,
        &setup.solver,
        &[coeff.clone(), coeff],
        &[u1, u2],
        setup.path_offset,
        setup.paths,
        |_| Vec::new(),
        |v, acc: &mut Vec<f64>| {
            if v.step % stride == 0 {
                acc.push(grid::l1_distance(h, &v.states[0], &v.states[1]));
            }
            Ok(())
        },
    )?;
    let total = runs.len();
    let (gaps, divergences) = partition(runs);
    let mut report = setup.report(ExperimentKind::Ergodic);
    report.push(divergence_criterion(total, divergences.len()));
    report.divergences = divergences;
    if !scope {
        report.notes.push("outside theorem scope: multiplicative noise, almost-sure convergence is not asserted".into());
    }
    if gaps.is_empty() {
        report.push(CriterionResult::failed("terminal_gap_fraction", params.required_paths, "no completed paths"));
        return Ok(report);
    }
    let slack = setup.slack();
    let times = record_times(&setup.solver);
    let st = pointwise_stats(&gaps)?;
    let curve = Curve::from_stats("gap_l1", times, &st);
    let (rise, rise_se) = worst_rise(&curve.mean, &curve.stderr, 2.0);
    report.curves.push(curve);
    report.push(
        CriterionResult::at_most("mean_non_increasing", rise, slack)
            .with_stderr(rise_se)
            .with_note("largest rise of mean - 2 SE above the running minimum"),
    );
    let m = gaps.len() as f64;
    let reached = gaps.iter().filter(|s| *s.last().unwrap() <= params.terminal_fraction * initial).count();
    let c = CriterionResult::at_least("terminal_gap_fraction", reached as f64 / m, params.required_paths).with_note(
        format!("{reached} of {} paths end with gap <= {} x initial ({initial:e})", gaps.len(), params.terminal_fraction),
    );
    report.push(if scope { c } else { c.informational().with_note("outside theorem scope") });
    let mono = gaps.iter().filter(|s| monotone_within(s, slack)).count();
    let c = CriterionResult::at_least("pathwise_monotone", mono as f64 / m, 1.0)
        .with_note(format!("{mono} of {} paths never rise above their running minimum by more than the slack", gaps.len()));
    report.push(if scope { c } else { c.informational().with_note("outside theorem scope") });
    Ok(report)
}
