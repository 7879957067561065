//! Repeated entry of `S(t) = ||u1||_H^2 + ||u2||_H^2` into `{S <= K0}`:
//! `tau_l = inf { t >= tau_{l-1} + T_w : S(t) <= K0 }`, `tau_0 = 0`, with
//! `K0 = 4 c0` and `c0` measured on a pilot ensemble.

use serde::{Deserialize, Serialize};

use super::{divergence_criterion, partition, run_ensemble, sample, CriterionResult, ExperimentKind, ExperimentReport, Setup, Table};
use crate::error::{Error, Result};
use crate::grid::{self, Grid};
use crate::profiles::Profile;
use crate::stats;
use crate::stepper::SolverConfig;

/// Pilot paths use ids from here on, away from the main ensemble.
const PILOT_ID_OFFSET: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BallEntryParams {
    pub u1: Profile,
    pub u2: Profile,
    /// Minimal spacing `T_w` between consecutive entries.
    pub window: f64,
    pub levels: usize,
    pub pilot_paths: usize,
    pub pilot_horizon: f64,
    /// Skips the pilot when set.
    pub k0: Option<f64>,
}

impl Default for BallEntryParams {
    fn default() -> Self {
        Self {
            u1: Profile::bump(4.0),
            u2: Profile::Sine { mode: 1, amplitude: -3.0 },
            window: 1.0,
            levels: 3,
            pilot_paths: 50,
            pilot_horizon: 4.0,
            k0: None,
        }
    }
}

fn energy(h: f64, states: &[Vec<f64>]) -> f64 {
    states.iter().map(|u| grid::h_norm_sq(h, u)).sum()
}

/// Measured `c0 = max_t E int_t^{t+T_w} S / (E S(t) + T_w)` over window starts spaced `T_w / 2`.
pub fn estimate_c0(setup: &Setup, params: &BallEntryParams, g: &Grid, u0s: &[Vec<f64>]) -> Result<(f64, Table)> {
    let cfg = SolverConfig { horizon: params.pilot_horizon, record_every: 1, ..setup.solver };
    let dt = cfg.dt;
    let w_steps = (params.window / dt).round() as usize;
    let steps = cfg.steps();
    if w_steps == 0 || w_steps > steps {
        return Err(Error::InvalidArgument("pilot horizon must cover at least one window".into()));
    }
    let h = g.spacing();
    let coeff = setup.coefficient()?;
    let runs = run_ensemble(
        setup,
        &cfg,
        &[coeff.clone(), coeff],
        u0s,
        setup.path_offset + PILOT_ID_OFFSET,
        params.pilot_paths,
        |_| Vec::with_capacity(steps + 1),
        |v, acc: &mut Vec<f64>| {
            acc.push(energy(h, v.states));
            Ok(())
        },
    )?;
    let (series, bad) = partition(runs);
    if series.is_empty() || !bad.is_empty() {
        return Err(Error::Precondition(format!("pilot ensemble lost {} of {} paths", bad.len(), params.pilot_paths)));
    }
    let mean: Vec<f64> = (0..=steps)
        .map(|j| stats::mean(&series.iter().map(|s| s[j]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let mut table = Table::new("pilot", &["t", "window_integral", "start_energy", "ratio"]);
    let mut c0 = 0.0_f64;
    let stride = (w_steps / 2).max(1);
    let mut s = 0;
    while s + w_steps <= steps {
        let integral = dt * stats::pairwise_sum(&mean[s + 1..=s + w_steps]);
        let ratio = integral / (mean[s] + params.window);
        table.push(vec![s as f64 * dt, integral, mean[s], ratio]);
        c0 = c0.max(ratio);
        s += stride;
    }
    Ok((c0, table))
}

struct Entries {
    taus: Vec<f64>,
    next: f64,
    s0: f64,
}

pub fn run_ball_entry(setup: &Setup, params: &BallEntryParams) -> Result<ExperimentReport> {
    setup.check()?;
    setup.require_additive_bounded("ball entry")?;
    if params.levels == 0 || !(params.window > 0.0) {
        return Err(Error::InvalidArgument("need at least one level and a positive window".into()));
    }
    let g = setup.grid;
    let h = g.spacing();
    let dt = setup.solver.dt;
    let u0s = vec![sample(&params.u1, &g)?, sample(&params.u2, &g)?];
    let mut report = setup.report(ExperimentKind::BallEntry);
    let k0 = match params.k0 {
        Some(k) => {
            report.notes.push(format!("K0 = {k:e} taken from the configuration"));
            k
        }
        None => {
            let (c0, table) = estimate_c0(setup, params, &g, &u0s)?;
            report.tables.push(table);
            report.notes.push(format!("measured c0 = {c0:e} from {} pilot paths; K0 = 4 c0", params.pilot_paths));
            4.0 * c0
        }
    };
    let levels = params.levels;
    let window = params.window;
    let coeff = setup.coefficient()?;
    let runs = run_ensemble(
        setup,
        &setup.solver,
        &[coeff.clone(), coeff],
        &u0s,
        setup.path_offset,
        setup.paths,
        |_| Entries { taus: Vec::with_capacity(levels), next: window, s0: f64::NAN },
        |v, acc| {
            let s = energy(h, v.states);
            if v.step == 0 {
                acc.s0 = s;
            }
            // Entry times sit on the step grid; compare in step units to avoid drift.
            if acc.taus.len() < levels && v.step as f64 >= acc.next / dt - 1e-9 && s <= k0 {
                acc.taus.push(v.t);
                acc.next = v.t + window;
            }
            Ok(())
        },
    )?;
    let total = runs.len();
    let (entries, divergences) = partition(runs);
    report.push(divergence_criterion(total, divergences.len()));
    report.divergences = divergences;
    report.push(
        CriterionResult::at_least("k0", k0, 0.0)
            .informational()
            .with_note(format!("initial S = {:e}", entries.first().map_or(f64::NAN, |e| e.s0))),
    );
    let entered = entries.iter().filter(|e| e.taus.len() == levels).count();
    let frac = entered as f64 / total.max(1) as f64;
    report.push(CriterionResult::at_least(&format!("entered_{levels}_levels"), frac, 1.0).with_note(format!(
        "{entered} of {total} paths realize tau_{levels} < {}; {} survive",
        setup.solver.horizon,
        total - entered
    )));
    let mut cols: Vec<String> = vec!["path".into()];
    cols.extend((1..=levels).map(|l| format!("tau_{l}")));
    let mut table = Table { name: "entry_times".into(), columns: cols, rows: Vec::new() };
    for (i, e) in entries.iter().enumerate() {
        let mut row = vec![i as f64];
        row.extend((0..levels).map(|l| e.taus.get(l).copied().unwrap_or(f64::NAN)));
        table.push(row);
    }
    report.tables.push(table);
    for l in 0..levels {
        let xs: Vec<f64> = entries.iter().filter_map(|e| e.taus.get(l).copied()).collect();
        if let Ok(ms) = stats::mean_se(&xs) {
            report.push(
                CriterionResult::at_most(&format!("mean_tau_{}", l + 1), ms.mean, setup.solver.horizon)
                    .with_stderr(ms.stderr)
                    .informational(),
            );
        }
    }
    Ok(report)
}
