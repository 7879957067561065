//! Uniform 1-D Dirichlet grid, nodal fields and the discrete norms.
//!
//! Fields store interior nodes only; both boundary nodes carry the value 0
//! implicitly. The discrete inner product carries the spacing weight,
//! `<f, g> = h * sum f_j g_j`, so discrete norms approach continuum norms
//! under refinement.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `(0, L)` with `n_interior` interior nodes `x_j = j h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    length: f64,
    n_interior: usize,
}

impl Grid {
    pub fn new(length: f64, n_interior: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("domain length must be positive, got {length}")));
        }
        if n_interior < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 interior nodes, got {n_interior}"
            )));
        }
        Ok(Self { length, n_interior })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.n_interior + 1) as f64
    }

    /// Coordinate of node `j`; `j = 0` and `j = n + 1` are the boundary nodes.
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    /// Interior node coordinates in order.
    pub fn interior_nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.n_interior).map(move |j| self.node(j))
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction { grid: *self, values: vec![0.0; self.n_interior] }
    }

    /// Samples `f` at the interior nodes.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Result<GridFunction> {
        GridFunction::new(*self, self.interior_nodes().map(f).collect())
    }

    /// Discrete Dirichlet eigenvalue `alpha_k = (4/h^2) sin^2(k pi h / (2L))`, `k >= 1`.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let h = self.spacing();
        let s = (k as f64 * PI * h / (2.0 * self.length)).sin();
        4.0 * s * s / (h * h)
    }

    /// Discrete eigenvector `e_k(x_j) = sqrt(2/L) sin(k pi x_j / L)`, orthonormal in `<.,.>_H`.
    pub fn eigenvector(&self, k: usize) -> GridFunction {
        let scale = (2.0 / self.length).sqrt();
        let values = self
            .interior_nodes()
            .map(|x| scale * (k as f64 * PI * x / self.length).sin())
            .collect();
        GridFunction { grid: *self, values }
    }

    /// The `k` lowest eigenpairs of the negative discrete Dirichlet Laplacian.
    pub fn eigenpairs(&self, k: usize) -> Result<Vec<(f64, GridFunction)>> {
        if k > self.n_interior {
            return Err(Error::TooManyModes { requested: k, available: self.n_interior });
        }
        Ok((1..=k).map(|i| (self.eigenvalue(i), self.eigenvector(i))).collect())
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if f.grid != *self {
            return Err(Error::ShapeMismatch { expected: self.n_interior, actual: f.len() });
        }
        Ok(())
    }

    /// Second-difference Laplacian with ghost zeros at the boundary.
    pub fn laplacian_apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check(f)?;
        let mut out = vec![0.0; self.n_interior];
        laplacian_into(self.spacing(), &f.values, &mut out);
        Ok(GridFunction { grid: *self, values: out })
    }

    pub fn inner(&self, f: &GridFunction, g: &GridFunction) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        Ok(inner(self.spacing(), &f.values, &g.values))
    }

    pub fn norm(&self, f: &GridFunction, which: Norm) -> Result<f64> {
        self.check(f)?;
        let h = self.spacing();
        match which {
            Norm::Lp(p) => {
                if !(p >= 1.0) {
                    return Err(Error::InvalidArgument(format!("Lp norm needs p >= 1, got {p}")));
                }
                Ok(lp_norm(h, &f.values, p))
            }
            Norm::Sup => Ok(f.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))),
            Norm::H1 => Ok(h1_norm_sq(h, &f.values).sqrt()),
            Norm::HMinus(delta) => {
                if !(delta > 0.0) {
                    return Err(Error::InvalidArgument(format!("H^-delta needs delta > 0, got {delta}")));
                }
                let mut acc = 0.0;
                for k in 1..=self.n_interior {
                    let c = self.mode_coefficient(f, k);
                    acc += self.eigenvalue(k).powf(-delta) * c * c;
                }
                Ok(acc.sqrt())
            }
        }
    }

    /// `<f, e_k>_H` computed directly from the sine samples.
    pub fn mode_coefficient(&self, f: &GridFunction, k: usize) -> f64 {
        mode_coefficient(self, &f.values, k)
    }

    /// `h * sum max(f_j - g_j, 0)`.
    pub fn positive_part_gap(&self, f: &GridFunction, g: &GridFunction) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        Ok(positive_part_gap(self.spacing(), &f.values, &g.values))
    }
}

/// Norm selector for [`Grid::norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    Lp(f64),
    Sup,
    /// Dirichlet energy norm `||grad f||_H` from forward differences with boundary zeros.
    H1,
    /// Spectral negative Sobolev norm with weights `alpha_i^(-delta)`.
    HMinus(f64),
}

/// Interior nodal values on a [`Grid`]; boundary values are implicitly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_interior() {
            return Err(Error::ShapeMismatch { expected: grid.n_interior(), actual: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> GridFunction {
        GridFunction { grid: self.grid, values: self.values.iter().map(|v| v * factor).collect() }
    }

    pub fn norm(&self, which: Norm) -> Result<f64> {
        self.grid.norm(self, which)
    }
}

pub fn inner(h: f64, f: &[f64], g: &[f64]) -> f64 {
    h * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
}

pub fn lp_norm(h: f64, f: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        return h * f.iter().map(|v| v.abs()).sum::<f64>();
    }
    if p == 2.0 {
        return h_norm_sq(h, f).sqrt();
    }
    (h * f.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
}

pub fn h_norm_sq(h: f64, f: &[f64]) -> f64 {
    h * f.iter().map(|v| v * v).sum::<f64>()
}

/// `sum over the n+1 faces of h * ((f_{j+1} - f_j)/h)^2`, boundary values zero.
pub fn h1_norm_sq(h: f64, f: &[f64]) -> f64 {
    let n = f.len();
    if n == 0 {
        return 0.0;
    }
    let mut acc = f[0] * f[0] + f[n - 1] * f[n - 1];
    for w in f.windows(2) {
        let d = w[1] - w[0];
        acc += d * d;
    }
    acc / h
}

pub fn laplacian_into(h: f64, f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let inv = 1.0 / (h * h);
    for j in 0..n {
        let left = if j == 0 { 0.0 } else { f[j - 1] };
        let right = if j + 1 == n { 0.0 } else { f[j + 1] };
        out[j] = (left - 2.0 * f[j] + right) * inv;
    }
}

pub fn positive_part_gap(h: f64, f: &[f64], g: &[f64]) -> f64 {
    h * f.iter().zip(g).map(|(a, b)| (a - b).max(0.0)).sum::<f64>()
}

pub fn l1_distance(h: f64, f: &[f64], g: &[f64]) -> f64 {
    h * f.iter().zip(g).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn mode_coefficient(grid: &Grid, f: &[f64], k: usize) -> f64 {
    let scale = (2.0 / grid.length()).sqrt();
    let w = k as f64 * PI / (grid.n_interior() + 1) as f64;
    let mut acc = 0.0;
    for (j, v) in f.iter().enumerate() {
        acc += v * (w * (j + 1) as f64).sin();
    }
    grid.spacing() * scale * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn build_grid_examples() {
        let g = Grid::new(1.0, 99).unwrap();
        assert_relative_eq!(g.spacing(), 0.01, epsilon = 1e-15);
        assert_relative_eq!(g.node(50), 0.5, epsilon = 1e-15);

        let g = Grid::new(2.0, 3).unwrap();
        let nodes: Vec<f64> = g.interior_nodes().collect();
        assert_eq!(nodes, vec![0.5, 1.0, 1.5]);

        assert!(Grid::new(0.0, 10).is_err());
        assert!(Grid::new(-1.0, 10).is_err());
        assert!(Grid::new(1.0, 2).is_err());
    }

    #[test]
    fn laplacian_of_spike_is_the_stencil() {
        let g = Grid::new(1.0, 9).unwrap();
        let mut v = vec![0.0; 9];
        v[4] = 1.0;
        let f = GridFunction::new(g, v).unwrap();
        let lap = g.laplacian_apply(&f).unwrap();
        let h2 = g.spacing().powi(2);
        assert_relative_eq!(lap.values()[3], 1.0 / h2, max_relative = 1e-14);
        assert_relative_eq!(lap.values()[4], -2.0 / h2, max_relative = 1e-14);
        assert_relative_eq!(lap.values()[5], 1.0 / h2, max_relative = 1e-14);
        assert_eq!(lap.values()[0], 0.0);
        assert!(g.laplacian_apply(&g.zeros()).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn first_eigenvector_is_an_eigenvector() {
        let g = Grid::new(1.0, 63).unwrap();
        let e1 = g.eigenvector(1);
        let lap = g.laplacian_apply(&e1).unwrap();
        let a1 = g.eigenvalue(1);
        for (l, e) in lap.values().iter().zip(e1.values()) {
            assert_relative_eq!(*l, -a1 * e, epsilon = 1e-9);
        }
        assert!((a1 - PI * PI).abs() < 2e-2);
        assert_relative_eq!(g.norm(&e1, Norm::HMinus(1.0)).unwrap(), a1.powf(-0.5), max_relative = 1e-10);
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let g = Grid::new(1.3, 20).unwrap();
        let pairs = g.eigenpairs(20).unwrap();
        for (i, (_, ei)) in pairs.iter().enumerate() {
            for (j, (_, ej)) in pairs.iter().enumerate() {
                let ip = g.inner(ei, ej).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "<e{i}, e{j}> = {ip}");
            }
        }
        assert!(g.eigenpairs(21).is_err());
    }

    #[test]
    fn norms_of_zero_and_invalid_p() {
        let g = Grid::new(1.0, 10).unwrap();
        let z = g.zeros();
        for which in [Norm::Lp(1.0), Norm::Lp(3.0), Norm::Sup, Norm::H1, Norm::HMinus(0.5)] {
            assert_eq!(g.norm(&z, which).unwrap(), 0.0);
        }
        assert!(g.norm(&z, Norm::Lp(0.5)).is_err());
        assert!(g.norm(&z, Norm::HMinus(0.0)).is_err());
    }

    #[test]
    fn positive_part_examples() {
        let g = Grid::new(1.0, 99).unwrap();
        let one = g.sample(|_| 1.0).unwrap();
        let zero = g.zeros();
        assert_relative_eq!(g.positive_part_gap(&one, &zero).unwrap(), 0.99, epsilon = 1e-12);
        assert_eq!(g.positive_part_gap(&one, &one).unwrap(), 0.0);
        assert_eq!(g.positive_part_gap(&zero, &one).unwrap(), 0.0);
    }

    #[test]
    fn grid_function_rejects_bad_input() {
        let g = Grid::new(1.0, 4).unwrap();
        assert!(GridFunction::new(g, vec![0.0; 3]).is_err());
        assert!(GridFunction::new(g, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }
}
