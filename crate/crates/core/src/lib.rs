//! Differentially private steady-state Kalman filtering.
//!
//! A system publishes its outputs through the Gaussian mechanism; a recipient
//! runs a steady-state Kalman filter on the noisy data. This crate provides:
//!
//! * [`privacy`]: Q-function and its inverse, sensitivity, noise calibration
//!   and trajectory privatization;
//! * [`riccati`] / [`filter`]: the steady-state Riccati solution and the
//!   filter that uses it;
//! * [`bounds`]: closed-form trace and log-determinant bounds on the
//!   recipient's error covariances;
//! * [`calibration`]: `ε` intervals that keep the MSE in a target range;
//! * [`network`]: block-diagonal composition of independent agents;
//! * [`simulation`]: seeded Monte Carlo validation;
//! * [`config`]: the JSON configuration schema used by the CLI.

pub mod bounds;
pub mod calibration;
pub mod config;
pub mod error;
pub mod filter;
pub mod linalg;
pub mod network;
pub mod noise;
pub mod privacy;
pub mod riccati;
pub mod simulation;
pub mod system;

pub use bounds::{BoundKind, BoundReport, ChannelExtremes};
pub use calibration::{CalibrationCheck, CalibrationKind, CalibrationTarget, EpsilonInterval};
pub use error::{Error, Result};
pub use filter::{FilterSolution, FilterState};
pub use linalg::{Matrix, Vector};
pub use network::{AgentSlice, AgentSpec, NetworkModel};
pub use privacy::{PrivacyConfig, Trajectory};
pub use riccati::{DareOptions, RiccatiSolution};
pub use simulation::{SimulationConfig, SimulationOutput, SimulationRecord, SimulationSummary};
pub use system::SystemModel;
