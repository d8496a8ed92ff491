//! Random suspensions of rigid unit balls settling in a periodic Stokes fluid.
//!
//! The crate samples hardcore and hyperuniform point processes on the torus,
//! estimates their two-point statistics, solves the linearized and the full
//! rigid-inclusion Stokes problems spectrally, and runs Monte Carlo scaling
//! sweeps in the tank size `L`.

pub mod error;
pub mod special;
pub mod harness;
pub mod linear_model;
pub mod point_process;
pub mod rng;
pub mod statistics;
pub mod stokes;
pub mod torus;

pub use error::{Error, Result};
pub use torus::{periodic_distance, SpectralField, TorusDomain};
