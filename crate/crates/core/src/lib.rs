//! Single-qubit simulation under continuous weak measurement with 1/f
//! charge noise, and the switching-count calibration built on it.
//!
//! The crate is organized bottom-up:
//! [`qubit`] (states, Hamiltonian, propagation), [`noise`] (the 1/f source),
//! [`detector`] (record sampling and Bayesian back-action),
//! [`ensemble`] (averaged dynamics), [`record`] (windowing and the 0/1 filter),
//! [`calibration`] (the two-phase protocol and its error budget) and
//! [`gates`] (gate fidelity with and without calibration).

pub mod calibration;
pub mod detector;
pub mod ensemble;
pub mod error;
pub mod gates;
pub mod noise;
pub mod qubit;
pub mod record;
pub mod seeding;
pub mod spectrum;

pub use error::{Error, Result};
pub use qubit::{DensityMatrix, PureState, QubitHamiltonian, Stepping};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
