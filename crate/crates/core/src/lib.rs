//! Stacked intelligent metasurface (SIM) receiver that is trained to perform
//! a 2D DFT in the wave domain, and the energy-peak DOA estimator built on
//! top of it.

pub mod cli;
pub mod config;
pub mod dft;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod geometry;
pub mod model;
pub mod model_file;
pub mod propagation;
pub mod protocol;
pub mod trainer;

pub use error::{Error, Result};
