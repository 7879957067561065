pub mod boundary_layer;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod kinetics;
pub mod noise;
pub mod output;
pub mod par;
pub mod profiles;
pub mod quadrature;
pub mod stats;
pub mod stepper;
pub mod tridiag;

pub use error::{Error, Result};
