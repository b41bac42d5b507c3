//! Command-line front end: JSON run configs, CSV datasets, fit reports and
//! static SVG plots on top of `franson-core`.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Cli, CliError};
pub use config::{parse_config, RunConfig, SchemaError};
