//! Front end for `blduality-core`: JSON problem and report schemas, a rayon
//! executor for parallel restarts, the subcommand implementations behind the
//! `blduality` binary, and the selftest runner.
//!
//! Reports are deterministic: maps are ordered, no timings are recorded, and
//! restart results are reduced in index order whatever the worker count.

pub mod commands;
pub mod config;
mod error;
pub mod exec;
pub mod report;
pub mod schema;
pub mod selftest;

pub use commands::{run, Command};
pub use config::RunConfig;
pub use error::CliError;
pub use report::{Report, Status};
