//! Configuration-driven sweeps over the collective spin models: spectra,
//! stationary states, dynamics, trajectories, perturbation tables, PT checks and
//! time-crystal detection, written as CSV/JSON with a hashed manifest and SVG figures.

pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod output;
pub mod svg;
pub mod table;

pub use config::{SweepConfig, Task};
pub use error::WorkbenchError;
