//! Lindblad Liouvillians for collective spin-S models: spectra, stationary states,
//! dynamics, quantum trajectories, PT-symmetry diagnostics, boundary-time-crystal
//! detection and degenerate perturbation theory in the dissipation strength.

pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod lindblad;
pub mod linalg;
pub mod models;
pub mod perturbation;
pub mod spin;
pub mod trajectory;

pub use error::{Error, Result};
pub use exec::Execution;
pub use linalg::c64;
