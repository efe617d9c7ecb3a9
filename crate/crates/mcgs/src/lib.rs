//! File formats, checkpoints and the `mcgs` command line around `mcgs-core`.

pub mod checkpoint;
pub mod commands;
pub mod error;
pub mod formats;
pub mod report;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
