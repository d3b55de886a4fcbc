//! Experiment harness: configuration, runs, predictions and the acceptance
//! suite.

pub mod check;
pub mod config;
pub mod error;
pub mod predict;
pub mod run;

pub use config::{ExperimentConfig, Method, Mode, Overrides};
pub use error::{HarnessError, Result};
