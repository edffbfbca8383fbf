//! Data generators, file formats, experiment runners and tabular output behind
//! the `meanfield` command-line tool.

pub mod app;
pub mod design;
pub mod error;
pub mod libsvm;
pub mod output;
pub mod runners;

pub use error::{CliError, CliResult};
