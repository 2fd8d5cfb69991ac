//! File formats, reports and the `nisp` command-line driver on top of
//! [`nisp_core`].

pub mod cli;
pub mod dataset;
mod error;
pub mod io;
pub mod model_format;
pub mod plan_format;
pub mod report;

pub use error::{Error, Result, EXIT_DATA, EXIT_INTERNAL, EXIT_USAGE};
