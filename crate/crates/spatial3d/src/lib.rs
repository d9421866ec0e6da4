//! File formats, checkpoints, reports and the `spatial3d` command line over
//! [`spatial3d_core`].

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod formats;
pub mod report;

pub use error::CliError;
