//! Library half of the `felasso` command-line tool: CSV ingestion and the
//! fit / simulate / diagnose command implementations, kept separate from
//! argument parsing so they stay testable.

pub mod commands;
pub mod error;
pub mod ingest;

pub use error::{CliError, CliResult};
