//! Thermostatically controlled load fleets as virtual batteries: device
//! dynamics, battery abstraction, state-level flexibility, AGC tracking,
//! regulation revenue and storage cost comparison.

pub mod battery;
pub mod config;
pub mod dispatch;
pub mod economics;
mod error;
pub mod fleet;
pub mod ingest;
pub mod market;
pub mod tcl;

pub use error::ModelError;
