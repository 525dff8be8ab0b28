//! Yosida-regularized solver for the stochastic Allen-Cahn equation with
//! logarithmic potential and noise that vanishes at the pure phases, together
//! with Monte Carlo checks of the a-priori estimates satisfied by its solutions.

pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
mod linalg;
pub mod noise;
pub mod potential;
pub mod run;
pub mod stepper;

pub use error::{Error, Result};
