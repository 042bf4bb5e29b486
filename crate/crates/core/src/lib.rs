//! Discretized fractional phase-transition energies with oscillating
//! coefficients: grids, energies, a clamped minimizer and the experiments
//! built on them.

pub mod energy;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod lab;
pub mod optimizer;
pub mod potential;
pub mod quadrature;

pub use error::{Error, Result};
