//! Command-line layer: scenario files, timestamp files, commands and reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod tagio;

pub use config::{load_scenario, parse_scenario};
pub use error::{CliError, CliResult};
pub use report::{emit_report, RunReport};
pub use tagio::{read_tags, write_tags};
