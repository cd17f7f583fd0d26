//! File formats, C-MAPSS ingestion, run configuration and the command-line
//! driver around [`prognos_core`].

pub mod bundle;
pub mod cli;
pub mod cmapss;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;
pub mod report;

pub use error::{CliError, CliResult, ErrorKind};
