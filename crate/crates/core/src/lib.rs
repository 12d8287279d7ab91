//! Pilot-wave (de Broglie–Bohm) dynamics on periodic grids.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`], [`state`]: configuration-space grids, spinor wavefunctions and densities;
//! - [`propagator`]: split-operator Schrödinger evolution;
//! - [`guidance`]: the velocity field, trajectory ensembles and trajectory diagnostics;
//! - [`equilibrium`]: |Ψ|² sampling, coarse-grained distances and the H-function;
//! - [`measurement`]: pointer couplings, branch overlaps and outcome statistics;
//! - [`phonon`]: the harmonic chain, one-phonon states and emergent wave behaviour.

// Range checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibrium;
pub mod error;
pub mod fft;
pub mod grid;
pub mod guidance;
pub mod measurement;
pub mod phonon;
pub mod propagator;
pub mod simulation;
pub mod state;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use grid::{Axis, AxisRole, Grid, Role};
pub use state::{inner_product, DensityField, SpinorWaveFunction};
