//! Boundary-layer cutoffs `zeta_delta` solving `-delta^2 zeta'' + zeta = 1`
//! with zero boundary values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::tridiag::Tridiagonal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLayer {
    pub delta: f64,
    pub zeta: GridFunction,
    /// Max-norm residual of the discrete system.
    pub residual: f64,
}

impl BoundaryLayer {
    /// Discrete second differences of `zeta`.
    pub fn laplacian(&self) -> Result<GridFunction> {
        self.zeta.grid().laplacian_apply(&self.zeta)
    }
}

/// Solves `(delta^2 (-Delta_h) + I) zeta = 1`.
pub fn solve_zeta(grid: &Grid, delta: f64) -> Result<BoundaryLayer> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let n = grid.n_interior();
    let c = delta * delta / grid.spacing().powi(2);
    let off = vec![-c; n - 1];
    let diag = vec![1.0 + 2.0 * c; n];
    let rhs = vec![1.0; n];
    let mut zeta = vec![0.0; n];
    Tridiagonal::new(n).solve(&off, &diag, &off, &rhs, &mut zeta)?;
    let mut residual = 0.0_f64;
    for j in 0..n {
        let l = if j == 0 { 0.0 } else { zeta[j - 1] };
        let r = if j + 1 == n { 0.0 } else { zeta[j + 1] };
        let res = diag[j] * zeta[j] - c * (l + r) - 1.0;
        residual = residual.max(res.abs());
    }
    Ok(BoundaryLayer { delta, zeta: GridFunction::new(*grid, zeta)?, residual })
}

/// `1 - cosh((x - L/2)/delta) / cosh(L/(2 delta))`, evaluated without overflow.
pub fn closed_form(x: f64, delta: f64, length: f64) -> f64 {
    let a = (x - 0.5 * length).abs() / delta;
    let b = 0.5 * length / delta;
    // cosh(a)/cosh(b) = e^(a-b) (1 + e^-2a) / (1 + e^-2b)
    1.0 - (a - b).exp() * (1.0 + (-2.0 * a).exp()) / (1.0 + (-2.0 * b).exp())
}

/// Max nodal distance between the discrete solution and the closed form.
pub fn closed_form_error(layer: &BoundaryLayer) -> f64 {
    let g = layer.zeta.grid();
    g.interior_nodes()
        .zip(layer.zeta.values())
        .map(|(x, z)| (z - closed_form(x, layer.delta, g.length())).abs())
        .fold(0.0, f64::max)
}

/// `sum over faces of phi(x_{f+1/2}) (zeta_{f+1} - zeta_f)`, the discrete `int phi zeta'`.
pub fn flux_integral<F: Fn(f64) -> f64>(layer: &BoundaryLayer, phi: F) -> f64 {
    let g = layer.zeta.grid();
    let z = layer.zeta.values();
    let n = z.len();
    let h = g.spacing();
    let mut acc = 0.0;
    for f in 0..=n {
        let l = if f == 0 { 0.0 } else { z[f - 1] };
        let r = if f == n { 0.0 } else { z[f] };
        acc += phi((f as f64 + 0.5) * h) * (r - l);
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
    /// `phi(0) - phi(L)`.
    pub target: f64,
    /// Value at the smallest delta.
    pub raw_limit: f64,
    /// Richardson estimate from the two smallest deltas, assuming an `O(delta)` error.
    pub extrapolated_limit: f64,
    pub relative_error_raw: f64,
    pub relative_error_extrapolated: f64,
}

/// Tracks `int phi zeta_delta'` along a decreasing delta sequence.
pub fn flux_limit_check<F: Fn(f64) -> f64>(grid: &Grid, phi: F, deltas: &[f64]) -> Result<FluxReport> {
    if deltas.len() < 2 {
        return Err(Error::InvalidArgument("flux check needs at least two deltas".into()));
    }
    let mut ds = deltas.to_vec();
    ds.sort_by(|a, b| b.total_cmp(a));
    let values = ds
        .iter()
        .map(|&d| Ok(flux_integral(&solve_zeta(grid, d)?, &phi)))
        .collect::<Result<Vec<_>>>()?;
    let target = phi(0.0) - phi(grid.length());
    let k = ds.len() - 1;
    let (d1, d2) = (ds[k - 1], ds[k]);
    let (v1, v2) = (values[k - 1], values[k]);
    let extrapolated = (d1 * v2 - d2 * v1) / (d1 - d2);
    let scale = target.abs().max(1e-300);
    let rel = |v: f64| if target == 0.0 { v.abs() } else { (v - target).abs() / scale };
    Ok(FluxReport {
        deltas: ds,
        raw_limit: v2,
        extrapolated_limit: extrapolated,
        relative_error_raw: rel(v2),
        relative_error_extrapolated: rel(extrapolated),
        values,
        target,
    })
}
