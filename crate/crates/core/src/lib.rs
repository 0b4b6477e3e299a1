//! Phase-continuous hologram sequences for moving optical tweezer arrays.

pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod planner;
pub mod propagation;
pub mod sequence;
pub mod solvers;
pub mod transient;
pub mod units;
pub mod verify;

pub use error::{Error, Result};
