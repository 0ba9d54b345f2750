//! Command-line driver and HTTP annotation service for the text-to-image
//! evaluation harness.

pub mod cli;
pub mod commands;
pub mod config;
pub mod report;
pub mod serve;

pub use cli::Cli;
pub use commands::run;
pub use config::HarnessConfig;
pub use report::{EvaluationReport, StatsBlock};
