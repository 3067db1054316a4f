//! File formats, dataset tooling and the `spd` command-line front end.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod padim_file;
pub mod pipeline;
pub mod pnm;
pub mod scan;
pub mod tables;

pub use error::{CliError, Result};
