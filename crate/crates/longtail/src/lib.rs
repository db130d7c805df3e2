//! File formats, run directories, the experiment grid and the command-line
//! surface around `longtail-core`.

pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod files;
pub mod grid;
pub mod run;

pub use error::{CliError, CliResult};
