//! Index-1 saddle point search with stochastic saddle point dynamics.
//!
//! The crate couples an interacting particle system (overdamped Langevin
//! positions carrying tangent vectors whose norms act as resampling
//! weights) with zero-length dimer local searches, and assembles the
//! located saddles into transition graphs between minima. A small
//! finite-difference solver for the underlying Fokker-Planck and Witten
//! equations on 2D grids is included for verification.

pub mod error;
pub mod potentials;
pub mod spectral;

pub use error::{Error, Result};
pub mod config;
pub mod dimer;
pub mod pde;
pub mod rng;
pub mod runner;
pub mod search;
pub mod sspd;
