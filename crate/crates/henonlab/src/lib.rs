//! File formats, parallel parameter scans and the `henonlab` command line
//! on top of `henonlab-core`.
//!
//! Maps are read from JSON (`{"factors": [{"a": [re, im], "p": [[re, im], ...],
//! "b": [...]}]}`), rasters are written as binary PGM/PPM, tables as CSV with
//! 17 significant digits, and every run leaves a `metadata.json` that echoes
//! its resolved configuration.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod json;
pub mod render;
pub mod scan;

pub use cli::run;
pub use error::{exit, CliError, CliResult};
