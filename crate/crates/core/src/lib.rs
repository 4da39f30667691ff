//! Closed-form interference alignment and cancellation (IAC) transceivers for
//! K-cell Gaussian interference MAC systems with M antennas per node.

pub mod error;
pub mod experiments;
pub mod feasibility;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod planner;
pub mod rng;
pub mod solver;
pub mod tolerance;
pub mod verify;

pub use error::{IacError, Result};
