//! Command-line front end of `eymlab`: run configuration, snapshot files,
//! check reports and the subcommands behind the `eymlab` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod snapshot;
