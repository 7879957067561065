//! Kinetic dissipation measure: dyadic decay of `2^-l m(A_{2^l})` beyond the
//! bulk of `|u|`, and moments of the band-limited mass across data sizes.

use serde::{Deserialize, Serialize};

use super::{divergence_criterion, partition, run_ensemble, CriterionResult, ExperimentKind, ExperimentReport, Setup, Table};
use crate::error::{Error, Result};
use crate::grid::Norm;
use crate::kinetics::{self, band_index, Bins, KineticHistogram};
use crate::profiles::Profile;
use crate::stats;
use crate::stepper::{Regularization, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KineticParams {
    pub profile: Profile,
    /// `||u0||_{L^1}` of the main run.
    pub l1_norm: f64,
    pub bins: usize,
    /// Half-width of the binned `xi` range; twice `max |u0|` when unset.
    pub xi_range: Option<f64>,
    /// Bands checked after the one holding the 99th percentile of `|u|`.
    pub extra_bands: i32,
    pub decay_tolerance: f64,
    /// `||u0||_{L^1}` values of the moment sweep; empty skips it.
    pub sweep_norms: Vec<f64>,
    pub moment_p: f64,
    /// Cutoff `k` of `m([0,T] x O x [-k, k])`.
    pub cutoff: f64,
}

impl Default for KineticParams {
    fn default() -> Self {
        Self {
            profile: Profile::Sine { mode: 1, amplitude: 1.0 },
            l1_norm: 1.0,
            bins: 64,
            xi_range: None,
            extra_bands: 3,
            decay_tolerance: 1e-6,
            sweep_norms: vec![1.0, 2.0, 4.0, 8.0],
            moment_p: 1.0,
            cutoff: 1.0,
        }
    }
}

struct KineticPath {
    histo: KineticHistogram,
    abs_u: Vec<f64>,
}

fn tau_of(cfg: &SolverConfig) -> f64 {
    match cfg.regularization {
        Regularization::Viscous { tau } => tau,
        _ => 0.0,
    }
}

fn ensemble(setup: &Setup, u0: Vec<f64>, bins: Bins, start: u64, keep_values: bool) -> Result<(Vec<KineticPath>, usize, Vec<super::Divergence>)> {
    let h = setup.grid.spacing();
    let dt = setup.solver.dt;
    let stride = setup.solver.record_every;
    let tau = tau_of(&setup.solver);
    let d = &setup.diffusion;
    let runs = run_ensemble(
        setup,
        &setup.solver,
        &[setup.coefficient()?],
        &[u0],
        start,
        setup.paths,
        |_| KineticPath { histo: KineticHistogram::new(bins), abs_u: Vec::new() },
        |v, acc| {
            let u = &v.states[0];
            if v.step > 0 {
                acc.histo.deposit_state(u, h, dt, |r| d.b(r), tau);
            }
            if keep_values && v.step % stride == 0 {
                acc.abs_u.extend(u.iter().map(|x| x.abs()));
            }
            Ok(())
        },
    )?;
    let total = runs.len();
    let (ok, bad) = partition(runs);
    Ok((ok, total, bad))
}

pub fn run_kinetic(setup: &Setup, params: &KineticParams) -> Result<ExperimentReport> {
    setup.check()?;
    if params.extra_bands < 1 || params.bins == 0 {
        return Err(Error::InvalidArgument("need at least one extra band and one bin".into()));
    }
    let g = setup.grid;
    let u0 = params.profile.sample_with_norm(&g, Norm::Lp(1.0), params.l1_norm)?;
    let sup0 = u0.norm(Norm::Sup)?;
    let bins = Bins::symmetric(params.xi_range.unwrap_or(2.0 * sup0), params.bins)?;
    let (paths, total, bad) = ensemble(setup, u0.into_values(), bins, setup.path_offset, true)?;
    let mut report = setup.report(ExperimentKind::Kinetic);
    report.push(divergence_criterion(total, bad.len()));
    report.divergences = bad;
    if paths.is_empty() {
        report.push(CriterionResult::failed("dyadic_decay", params.decay_tolerance, "no completed paths"));
        return Ok(report);
    }

    let all_abs: Vec<f64> = paths.iter().flat_map(|p| p.abs_u.iter().copied()).collect();
    let q99 = stats::quantile(&all_abs, 0.99)?;
    let l0 = band_index(q99).ok_or_else(|| Error::Precondition("99th percentile of |u| is zero".into()))?;
    let histos: Vec<KineticHistogram> = paths.into_iter().map(|p| p.histo).collect();
    let total_mass = stats::mean_se(&histos.iter().map(|h| h.total()).collect::<Vec<_>>())?;
    let mut bands = Table::new("dyadic_bands", &["l", "decay_mean", "decay_stderr", "mass_mean"]);
    let mut decay = Vec::new();
    for l in l0..=l0 + params.extra_bands {
        let d = kinetics::ensemble_dyadic_decay(&histos, l)?;
        let m = stats::mean(&histos.iter().map(|h| h.band_mass(l)).collect::<Vec<_>>())?;
        bands.push(vec![l as f64, d.mean, d.stderr, m]);
        decay.push(d.mean);
    }
    let worst_rise = decay.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    report.push(
        CriterionResult::at_most("dyadic_monotone", worst_rise, 0.0)
            .with_note(format!("largest increase of the mean tally over bands {l0}..={}", l0 + params.extra_bands)),
    );
    let tail_min = decay[1..].iter().copied().fold(f64::INFINITY, f64::min);
    report.push(
        CriterionResult::at_most("dyadic_decay", tail_min / total_mass.mean, params.decay_tolerance).with_note(format!(
            "smallest tally within {} bands after band {l0} (99th percentile of |u| = {q99:e}), relative to total mass {:e}",
            params.extra_bands, total_mass.mean
        )),
    );
    report.tables.push(bands);

    let mut merged = KineticHistogram::new(bins);
    for hst in &histos {
        merged.merge(hst)?;
    }
    merged.scale(1.0 / histos.len() as f64);
    let mut hist = Table::new("histogram", &["bin_lo", "bin_hi", "n1", "n2", "mass"]);
    for i in 0..bins.count {
        let (lo, hi) = bins.edges(i);
        hist.push(vec![lo, hi, merged.n1[i], merged.n2[i], merged.n1[i] + merged.n2[i]]);
    }
    report.tables.push(hist);
    report.notes.push(format!(
        "mean total mass {:e} (n1 {:e}, n2 {:e}, outside bins {:e})",
        merged.total(),
        merged.total_n1,
        merged.total_n2,
        merged.outside
    ));

    if params.sweep_norms.len() >= 2 {
        let p = params.moment_p;
        let mut sweep = Table::new("moment_sweep", &["l1_norm", "moment", "stderr"]);
        let mut ys = Vec::new();
        let mut sweep_bad = 0usize;
        for (i, &norm) in params.sweep_norms.iter().enumerate() {
            let u0 = params.profile.sample_with_norm(&g, Norm::Lp(1.0), norm)?;
            let b = Bins::symmetric(2.0 * u0.norm(Norm::Sup)?.max(params.cutoff), params.bins)?;
            let start = setup.path_offset + ((i + 1) * setup.paths) as u64;
            let (paths, _, bad) = ensemble(setup, u0.into_values(), b, start, false)?;
            sweep_bad += bad.len();
            report.divergences.extend(bad);
            let hs: Vec<KineticHistogram> = paths.into_iter().map(|p| p.histo).collect();
            let mr = kinetics::measure_bound_report(&hs, params.cutoff, p)?;
            sweep.push(vec![norm, mr.moment, mr.stderr]);
            ys.push(mr.moment);
        }
        report.push(match stats::log_log_slope(&params.sweep_norms, &ys) {
            Ok(s) => CriterionResult::at_most("moment_slope", s, p + 0.5)
                .with_note(format!("log-log slope of E m([-{}, {}])^{p} against ||u0||_L1", params.cutoff, params.cutoff)),
            Err(e) => CriterionResult::failed("moment_slope", p + 0.5, e.to_string()),
        });
        report.push(CriterionResult::at_most("sweep_diverged_paths", sweep_bad as f64, 0.0));
        report.tables.push(sweep);
    }
    Ok(report)
}
