//! Scenario files, parallel Monte Carlo runs, CSV results, SVG figures, and
//! matching of user data on top of `psmlab-core`.

pub mod applied;
pub mod config;
pub mod error;
pub mod export;
pub mod figures;
pub mod runner;

pub use error::{Error, Result};
