//! Command-line pipeline over the `prescriptor` library.
//!
//! Stages exchange JSON artifacts stamped with a hash of the configuration
//! that produced them; a later stage refuses artifacts from another
//! configuration.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use config::{Context, PipelineConfig};
pub use error::CliError;
