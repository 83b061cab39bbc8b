//! Command-line front end: scenario files, CSV trajectory logs and the
//! `simulate`, `check` and `compare` commands.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad configuration, time grid or
//! log, 3 inadmissible initial state, 4 numerical abort.

pub mod commands;
pub mod config;
pub mod csvlog;
mod error;

pub use error::CliError;
