//! Library side of the `isochron` command: configuration, caching and the
//! per-command pipeline. The binary only parses flags and reports.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod oracle;

pub use commands::{run, Outcome};
pub use config::{Command, RunConfig, TimeSpec};
pub use error::CliError;
