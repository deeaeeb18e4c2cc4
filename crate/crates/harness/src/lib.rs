//! Experiment harness: specs, file formats, run manifests and the commands
//! behind the `bonbon` CLI.

pub mod commands;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod reproduce;
pub mod spec;

pub use error::{HarnessError, EXIT_CRITERION_FAILED, EXIT_INVALID_INPUT, EXIT_OK};
