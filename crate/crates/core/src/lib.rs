//! Learned feedback linearization for a kinematic bicycle vehicle.

pub mod error;
pub mod harness;
pub mod learn;
pub mod linearize;
pub mod net;
pub mod numerics;
pub mod planner;
pub mod prenet;
pub mod vehicle;

pub use error::{Error, Result};
