//! Command-line surface for consensus fusion: mask files, manifests,
//! reports and the subcommands behind the `consensus` binary.

pub mod commands;
pub mod error;
pub mod format;
pub mod png;
pub mod report;

pub use error::CliError;
