//! Batch front-end for the `fockforge` simulator: TOML run configurations,
//! the `simulate`, `sweep`, `converge` and `estimate` commands, and their
//! CSV, JSON and SVG outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

pub use commands::{run, Context, Format, Formats, Report};
pub use config::{Command, Mode, Overrides, RunConfig};
pub use error::CliError;
