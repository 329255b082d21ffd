//! File formats, experiment orchestration and the `voradv` command line on
//! top of `voradv-core`.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod idx;
pub mod run;
pub mod theory;

pub use error::{CliError, CliResult};
