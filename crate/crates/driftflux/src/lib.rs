//! Pseudo-spectral solver and Littlewood-Paley analysis toolkit for a
//! compressible viscous liquid-gas drift-flux model on the periodic torus.
//!
//! The crate provides:
//! - spectral fields on `[0, L)^d` with exact trigonometric differentiation
//!   and 2/3-rule dealiasing (`grid`, `field`);
//! - dyadic frequency decomposition, hybrid Besov norms, Chemin-Lerner time
//!   norms, and sharp annulus projection (`lp`);
//! - the two-phase pressure law, its decoupling change of variables, and the
//!   large-data reciprocal chart with all nonlinear right-hand sides
//!   (`model`);
//! - explicit RK4 time integration of the projected systems with an exact
//!   closed-form solver for the constant-coefficient linear system
//!   (`solver`);
//! - norm histories, energy functionals, estimate ratios with implied
//!   constants, conservation tracking, and CSV export (`diagnostics`);
//! - reproducible scenario configurations for the command-line runner
//!   (`scenario`) and a portable binary snapshot format (`snapshot`).

pub mod diagnostics;
pub mod error;
pub mod field;
mod fft;
pub mod grid;
pub mod lp;
pub mod model;
pub mod scenario;
pub mod snapshot;
pub mod solver;

pub use error::{Error, Fault, Result};

/// Library crate version, for run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
