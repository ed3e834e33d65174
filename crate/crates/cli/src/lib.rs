//! Command-line plumbing around `ni_reweight`: CSV ingestion, TOML
//! configuration, the end-to-end pipeline and its JSON report.

pub mod config;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod simulate;

pub use error::{CliError, Result};
