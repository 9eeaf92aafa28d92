//! Saturation throughput of CSMA/CA data collection by a UAV flying over a
//! field of ground devices: analytic model, event simulator and experiments.

pub mod acceptance;
pub mod config;
pub mod coverage;
pub mod error;
pub mod experiments;
pub mod model;
pub mod plot;
pub mod reference;
pub mod report;
pub mod sim;
pub mod timing;

pub use error::{Error, Result};
