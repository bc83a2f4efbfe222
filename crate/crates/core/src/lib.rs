//! Extremes of stochastic volatility random fields `X_v = Y_v Z_v` on `Z^d`.
//!
//! The crate simulates moving-average and GARCH(1,1) volatility fields,
//! evaluates the extremal functional and extremal index in closed form or by
//! Monte Carlo, and provides the empirical estimators and cluster-count tests
//! that check those limits on simulated data.

pub mod clusters;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod lattice;
pub mod limits;
pub mod parallel;
pub mod rng;
pub mod sim;
pub mod tailmodels;
pub mod theory;

pub use error::{Error, Result};
pub use lattice::{LatticeBox, Site};
pub use rng::StreamKey;
pub use sim::{FieldSample, GarchParams, KernelPsi};
pub use tailmodels::{TailModel, VolModelY, YKind};
