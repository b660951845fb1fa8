//! Waveform inversion for 2D acoustic media with a data-driven estimate of
//! the internal wave.
//!
//! The crate synthesizes array data with a finite-difference time-domain
//! solver, builds a reduced-order model of the wave propagator directly from
//! the sampled data matrices, estimates the wave field inside the
//! inaccessible medium, and inverts for the wave speed by regularized
//! linearized least squares.

pub mod block;
pub mod error;
pub mod fdtd;
pub mod grid;
pub mod internal_wave;
pub mod inversion;
pub mod io;
pub mod rom;
pub mod scenario;
pub mod signal;
pub mod survey;
pub mod verify;

pub use block::{BlockMatrix, StructureTag};
pub use error::{Error, Result};
pub use grid::{cfl_dt, grid_spacing, Grid2D, Medium, Rect, SensorArray, TimeGrid};
pub use signal::{PulseSpec, SampledSignal};
