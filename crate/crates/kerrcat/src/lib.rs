//! Kerr-cat qubit simulator.
//!
//! Rotating-frame model of a two-photon driven Kerr oscillator, optionally coupled to a
//! lossy readout cavity that provides frequency-selective engineered dissipation. All
//! frequencies and rates are stored internally as angular quantities (rad/s, 1/s).

pub mod error;
pub mod linalg;
pub mod hilbert;
pub mod dynamics;
pub mod spectrum;
pub mod fitting;
pub mod composite;
pub mod protocols;
pub mod cli;

pub use error::{KerrcatError, Result};
