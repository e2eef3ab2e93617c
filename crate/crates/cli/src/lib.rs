//! Configuration-driven runner for the `gencoord` scenarios.
//!
//! Each subcommand reads a [`config::RunConfig`], writes CSV tables and a JSON
//! report into an output directory and returns the report.

pub mod commands;
pub mod config;
pub mod output;
pub mod reference;

pub use commands::{cmd_filter, cmd_least_action, cmd_linear_analysis, cmd_simulate, RunOptions};
pub use config::{ConfigError, RunConfig};
