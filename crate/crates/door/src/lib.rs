//! File formats, reports, parallel runners and the `door` command line on
//! top of `door-core`.

pub mod cli;
pub mod error;
pub mod io;
pub mod report;
pub mod runner;

pub use error::{CliError, CliResult};
