//! Simulation and estimation for quantum systems coupled to boson and
//! fermion fields.
//!
//! The crate builds parity-graded operator models ([`algebra`]), validates
//! system models and provides the quantum-dot and photodetection presets
//! with their closed scalar filters ([`models`]), evolves unconditional
//! states through the master equation ([`dynamics`]), synthesizes
//! electron-counting records by quantum-jump unravelling and runs the
//! counting filter on them ([`stochastics`]), and carries the classical
//! Kalman and grid-based nonlinear filters as baselines ([`classical`]).

pub mod algebra;
pub mod classical;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod stochastics;
pub mod tabular;
pub mod telemetry;

pub use error::{Error, Result};
pub use linalg::{C64, CMatrix};
