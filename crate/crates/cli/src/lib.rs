//! Experiment harness around the `uvpose` library: dataset rendering and
//! corruption, batch pose estimation, RANSAC sweeps, evaluation and the
//! composite loss, all behind the `uvpose` binary.

pub mod cli;
pub mod commands;
pub mod dataset;
pub mod error;
pub mod estimate;
pub mod evaluate;
pub mod loss;
pub mod sweep;

pub use cli::{run, Cli, Command};
pub use error::{CliError, Result};
