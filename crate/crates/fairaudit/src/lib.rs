//! File formats, reports and the command-line front end for
//! [`fairaudit_core`].

pub mod cli;
pub mod commands;
pub mod emit;
pub mod error;
pub mod ingest;
pub mod output;
pub mod report;

pub use error::{exit, CliError, Result};
