//! Named initial data. Every profile is sampled at interior nodes only, so
//! the boundary values stay zero.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Norm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    Constant { value: f64 },
    /// `height cos^2(pi (x - center) / (2 width))` on `|x - center| < width`, in units of `L`.
    Bump { center: f64, width: f64, height: f64 },
    /// `height` on `[lo, hi]` (units of `L`), zero elsewhere.
    Step { lo: f64, hi: f64, height: f64 },
    TwoBump { height: f64 },
    Sine { mode: usize, amplitude: f64 },
    /// Sum of the first `modes` eigenvectors with Gaussian weights `~ k^-2`.
    RandomH1 { seed: u64, modes: usize, amplitude: f64 },
}

impl Profile {
    pub fn bump(height: f64) -> Self {
        Profile::Bump { center: 0.5, width: 0.25, height }
    }

    pub fn shifted_bump(height: f64, shift: f64) -> Self {
        Profile::Bump { center: 0.5 + shift, width: 0.25, height }
    }

    pub fn sample(&self, grid: &Grid) -> Result<GridFunction> {
        let l = grid.length();
        match *self {
            Profile::Zero => Ok(grid.zeros()),
            Profile::Constant { value } => grid.sample(|_| value),
            Profile::Bump { center, width, height } => {
                if !(width > 0.0) {
                    return Err(Error::InvalidArgument(format!("bump width must be positive, got {width}")));
                }
                grid.sample(|x| {
                    let s = (x / l - center) / width;
                    if s.abs() < 1.0 { height * (0.5 * PI * s).cos().powi(2) } else { 0.0 }
                })
            }
            Profile::Step { lo, hi, height } => {
                grid.sample(|x| if (lo..=hi).contains(&(x / l)) { height } else { 0.0 })
            }
            Profile::TwoBump { height } => grid.sample(|x| {
                let bump = |c: f64| {
                    let s = (x / l - c) / 0.15;
                    if s.abs() < 1.0 { (0.5 * PI * s).cos().powi(2) } else { 0.0 }
                };
                height * (bump(0.3) + bump(0.7))
            }),
            Profile::Sine { mode, amplitude } => {
                if mode == 0 {
                    return Err(Error::InvalidArgument("sine mode starts at 1".into()));
                }
                grid.sample(|x| amplitude * (mode as f64 * PI * x / l).sin())
            }
            Profile::RandomH1 { seed, modes, amplitude } => {
                if modes == 0 || modes > grid.n_interior() {
                    return Err(Error::TooManyModes { requested: modes, available: grid.n_interior() });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut v = vec![0.0; grid.n_interior()];
                for k in 1..=modes {
                    let w: f64 = StandardNormal.sample(&mut rng);
                    let e = grid.eigenvector(k);
                    for (a, b) in v.iter_mut().zip(e.values()) {
                        *a += amplitude * w * b / (k * k) as f64;
                    }
                }
                GridFunction::new(*grid, v)
            }
        }
    }

    /// Samples and rescales so that `norm` equals `target`.
    pub fn sample_with_norm(&self, grid: &Grid, norm: Norm, target: f64) -> Result<GridFunction> {
        let f = self.sample(grid)?;
        let current = f.norm(norm)?;
        if current == 0.0 {
            if target == 0.0 {
                return Ok(f);
            }
            return Err(Error::InvalidArgument("cannot rescale a zero profile".into()));
        }
        Ok(f.scaled(target / current))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_finite_and_scalable() {
        let g = Grid::new(1.0, 64).unwrap();
        for p in [
            Profile::Zero,
            Profile::Constant { value: 2.0 },
            Profile::bump(1.0),
            Profile::Step { lo: 0.2, hi: 0.6, height: 1.0 },
            Profile::TwoBump { height: 1.0 },
            Profile::Sine { mode: 2, amplitude: 1.0 },
            Profile::RandomH1 { seed: 4, modes: 16, amplitude: 1.0 },
        ] {
            assert!(p.sample(&g).is_ok());
        }
        let f = Profile::bump(1.0).sample_with_norm(&g, Norm::Lp(4.0), 8.0).unwrap();
        assert!((f.norm(Norm::Lp(4.0)).unwrap() - 8.0).abs() < 1e-12);
        assert!(Profile::Zero.sample_with_norm(&g, Norm::Lp(1.0), 1.0).is_err());
    }

    #[test]
    fn bump_support() {
        let g = Grid::new(1.0, 99).unwrap();
        let f = Profile::bump(2.0).sample(&g).unwrap();
        assert_eq!(f.values()[49], 2.0);
        assert_eq!(f.values()[10], 0.0);
    }
}
