//! Likelihood reweighting of a historical trial's treatment effect toward a
//! current trial's population, and noninferiority tests built on the result.

pub mod bootstrap;
pub mod calibration;
pub mod data;
pub mod error;
pub mod glm;
pub mod ni_test;
pub mod par;
pub mod propensity;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
