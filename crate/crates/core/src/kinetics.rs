//! Kinetic diagnostics: the kinetic function `1_{u > xi}` and the parabolic
//! dissipation measure binned over the `xi` axis.
//!
//! Node `j` (boundary nodes included, where `u = 0`) deposits
//! `b(u_j) (D_-^2 + D_+^2)/2 h dt` at `xi = u_j`, with `D_-`, `D_+` the face
//! differences on either side. Summed over nodes this is `sum_f D_f^2 h dt`
//! weighted by `b`, the same face gradient the stepper uses.

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::stats;
use crate::stepper::{Status, Trajectory};

/// `h_j = 1_{u_j > xi}`.
pub fn kinetic_function(u: &GridFunction, xi: f64) -> Vec<u8> {
    u.values().iter().map(|v| u8::from(*v > xi)).collect()
}

/// `chi_j = 1_{u_j > xi} - 1_{0 > xi}`.
pub fn chi(u: &GridFunction, xi: f64) -> Vec<i8> {
    let base = i8::from(0.0 > xi);
    u.values().iter().map(|v| i8::from(*v > xi) - base).collect()
}

const BAND_MIN: i32 = -64;
const BAND_MAX: i32 = 63;

/// Dyadic band `l` with `2^l <= |xi| < 2^(l+1)`, read from the exponent bits.
/// Values below `2^BAND_MIN` (zero included) return `None`.
pub fn band_index(xi: f64) -> Option<i32> {
    let a = xi.abs();
    if a < 2f64.powi(BAND_MIN) || !a.is_finite() {
        return None;
    }
    let exp = ((a.to_bits() >> 52) & 0x7ff) as i32 - 1023;
    Some(exp.min(BAND_MAX))
}

/// Uniform `xi` bins on `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Bins {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(hi > lo) || count == 0 {
            return Err(Error::InvalidArgument(format!("bad bins [{lo}, {hi}) x {count}")));
        }
        Ok(Self { lo, hi, count })
    }

    /// Bins covering `[-max_abs, max_abs]` with a 10% margin.
    pub fn symmetric(max_abs: f64, count: usize) -> Result<Self> {
        let m = 1.1 * max_abs.max(1e-12);
        Self::new(-m, m, count)
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.count as f64
    }

    fn index(&self, xi: f64) -> Option<usize> {
        if xi < self.lo || xi >= self.hi {
            return None;
        }
        Some((((xi - self.lo) / self.width()) as usize).min(self.count - 1))
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }
}

/// Accumulated dissipation measure `m = n1 + n2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticHistogram {
    pub bins: Bins,
    /// Parabolic part `n1` per bin.
    pub n1: Vec<f64>,
    /// Viscous part `n2` per bin.
    pub n2: Vec<f64>,
    /// Mass deposited outside the bin range.
    pub outside: f64,
    /// Mass per dyadic band, index `l - BAND_MIN`.
    pub bands: Vec<f64>,
    /// Mass with `|xi| < 2^BAND_MIN`.
    pub core: f64,
    pub total_n1: f64,
    pub total_n2: f64,
}

impl KineticHistogram {
    pub fn new(bins: Bins) -> Self {
        Self {
            bins,
            n1: vec![0.0; bins.count],
            n2: vec![0.0; bins.count],
            outside: 0.0,
            bands: vec![0.0; (BAND_MAX - BAND_MIN + 1) as usize],
            core: 0.0,
            total_n1: 0.0,
            total_n2: 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.total_n1 + self.total_n2
    }

    fn deposit(&mut self, xi: f64, m1: f64, m2: f64) {
        let m = m1 + m2;
        if m == 0.0 {
            return;
        }
        match self.bins.index(xi) {
            Some(i) => {
                self.n1[i] += m1;
                self.n2[i] += m2;
            }
            None => self.outside += m,
        }
        match band_index(xi) {
            Some(l) => self.bands[(l - BAND_MIN) as usize] += m,
            None => self.core += m,
        }
        self.total_n1 += m1;
        self.total_n2 += m2;
    }

    /// Deposits one state held for `weight` time units.
    pub fn deposit_state<B: Fn(f64) -> f64>(&mut self, u: &[f64], h: f64, weight: f64, b: B, tau: f64) {
        let n = u.len();
        if n == 0 || weight == 0.0 {
            return;
        }
        let scale = h * weight;
        let face = |f: usize| {
            let l = if f == 0 { 0.0 } else { u[f - 1] };
            let r = if f == n { 0.0 } else { u[f] };
            let d = (r - l) / h;
            d * d
        };
        let mut left = face(0);
        let g0 = 0.5 * left * scale;
        self.deposit(0.0, b(0.0) * g0, tau * g0);
        for j in 0..n {
            let right = face(j + 1);
            let g = 0.5 * (left + right) * scale;
            self.deposit(u[j], b(u[j]) * g, tau * g);
            left = right;
        }
        let gn = 0.5 * left * scale;
        self.deposit(0.0, b(0.0) * gn, tau * gn);
    }

    /// Bin-wise sum; associative and commutative up to rounding.
    pub fn merge(&mut self, other: &KineticHistogram) -> Result<()> {
        if self.bins != other.bins {
            return Err(Error::ShapeMismatch { expected: self.bins.count, actual: other.bins.count });
        }
        for (a, b) in self.n1.iter_mut().zip(&other.n1) {
            *a += b;
        }
        for (a, b) in self.n2.iter_mut().zip(&other.n2) {
            *a += b;
        }
        for (a, b) in self.bands.iter_mut().zip(&other.bands) {
            *a += b;
        }
        self.outside += other.outside;
        self.core += other.core;
        self.total_n1 += other.total_n1;
        self.total_n2 += other.total_n2;
        Ok(())
    }

    /// Multiplies every mass by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for v in self.n1.iter_mut().chain(self.n2.iter_mut()).chain(self.bands.iter_mut()) {
            *v *= factor;
        }
        self.outside *= factor;
        self.core *= factor;
        self.total_n1 *= factor;
        self.total_n2 *= factor;
    }

    /// Mass in `2^l <= |xi| < 2^(l+1)`.
    pub fn band_mass(&self, l: i32) -> f64 {
        if l < BAND_MIN {
            return 0.0;
        }
        if l > BAND_MAX {
            return 0.0;
        }
        self.bands[(l - BAND_MIN) as usize]
    }

    /// `2^-l m(A_{2^l})`.
    pub fn dyadic_decay(&self, l: i32) -> f64 {
        2f64.powi(-l) * self.band_mass(l)
    }

    /// Mass in bins whose centre lies in `[-k, k]`.
    pub fn mass_within(&self, k: f64) -> f64 {
        let w = self.bins.width();
        (0..self.bins.count)
            .filter(|&i| (self.bins.lo + w * (i as f64 + 0.5)).abs() <= k)
            .map(|i| self.n1[i] + self.n2[i])
            .sum()
    }

    pub fn summary(&self, levels: std::ops::RangeInclusive<i32>) -> KineticSummary {
        KineticSummary {
            total: self.total(),
            total_n1: self.total_n1,
            total_n2: self.total_n2,
            outside: self.outside,
            bands: levels
                .map(|l| BandTally { l, mass: self.band_mass(l), decay: self.dyadic_decay(l) })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandTally {
    pub l: i32,
    pub mass: f64,
    pub decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticSummary {
    pub total: f64,
    pub total_n1: f64,
    pub total_n2: f64,
    pub outside: f64,
    pub bands: Vec<BandTally>,
}

/// Accumulates `n1` (and `n2 = tau |grad u|^2` when `tau > 0`) along a
/// completed trajectory; snapshot `k` is held for `t_k - t_{k-1}`.
pub fn accumulate_dissipation(
    traj: &Trajectory,
    diffusion: &DiffusionSpec,
    bins: Bins,
    tau: f64,
) -> Result<KineticHistogram> {
    if traj.snapshots.is_empty() {
        return Err(Error::Empty("trajectory has no snapshots".into()));
    }
    if traj.status != Status::Completed {
        return Err(Error::Precondition("kinetic accumulation needs a completed trajectory".into()));
    }
    let mut histo = KineticHistogram::new(bins);
    let h = traj.grid.spacing();
    for k in 1..traj.snapshots.len() {
        let w = traj.times[k] - traj.times[k - 1];
        histo.deposit_state(traj.snapshots[k].values(), h, w, |r| diffusion.b(r), tau);
    }
    Ok(histo)
}

/// Ensemble mean of `2^-l m(A_{2^l})`.
pub fn ensemble_dyadic_decay(histos: &[KineticHistogram], l: i32) -> Result<stats::MeanSe> {
    let xs: Vec<f64> = histos.iter().map(|h| h.dyadic_decay(l)).collect();
    stats::mean_se(&xs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub cutoff: f64,
    pub p: f64,
    pub moment: f64,
    pub stderr: f64,
    pub paths: usize,
}

/// `E |m([0,T] x O x [-k, k])|^p` over an ensemble.
pub fn measure_bound_report(histos: &[KineticHistogram], k: f64, p: f64) -> Result<MomentReport> {
    if histos.is_empty() {
        return Err(Error::Empty("no histograms".into()));
    }
    let xs: Vec<f64> = histos.iter().map(|h| h.mass_within(k).powf(p)).collect();
    let m = stats::mean_se(&xs)?;
    Ok(MomentReport { cutoff: k, p, moment: m.mean, stderr: m.stderr, paths: histos.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn kinetic_function_extremes() {
        let g = Grid::new(1.0, 5).unwrap();
        let u = GridFunction::new(g, vec![-1.0, 0.5, 2.0, 0.0, 1.0]).unwrap();
        assert!(kinetic_function(&u, -3.0).iter().all(|v| *v == 1));
        assert!(kinetic_function(&u, 3.0).iter().all(|v| *v == 0));
        assert_eq!(chi(&u, -0.5), vec![-1, 0, 0, 0, 0]);
        assert_eq!(chi(&u, 0.7), vec![0, 0, 1, 0, 1]);
    }

    #[test]
    fn band_indices() {
        assert_eq!(band_index(1.0), Some(0));
        assert_eq!(band_index(1.999), Some(0));
        assert_eq!(band_index(-2.0), Some(1));
        assert_eq!(band_index(0.3), Some(-2));
        assert_eq!(band_index(0.0), None);
    }

    #[test]
    fn constant_state_deposits_only_at_boundary_faces() {
        let g = Grid::new(1.0, 9).unwrap();
        let mut histo = KineticHistogram::new(Bins::new(-2.0, 2.0, 40).unwrap());
        let u = vec![0.0; 9];
        histo.deposit_state(&u, g.spacing(), 0.1, |_| 1.0, 0.0);
        assert_eq!(histo.total(), 0.0);
    }

    #[test]
    fn total_matches_weighted_dirichlet_energy() {
        let g = Grid::new(1.0, 31).unwrap();
        let u = g.sample(|x| (3.0 * x).sin() * x * (1.0 - x)).unwrap();
        let mut histo = KineticHistogram::new(Bins::symmetric(1.0, 64).unwrap());
        histo.deposit_state(u.values(), g.spacing(), 0.5, |_| 2.0, 0.3);
        let e = crate::grid::h1_norm_sq(g.spacing(), u.values());
        assert!((histo.total_n1 - 2.0 * 0.5 * e).abs() < 1e-12);
        assert!((histo.total_n2 - 0.3 * 0.5 * e).abs() < 1e-12);
        let binned: f64 = histo.n1.iter().chain(&histo.n2).sum::<f64>() + histo.outside;
        assert!((binned - histo.total()).abs() < 1e-12);
    }
}
