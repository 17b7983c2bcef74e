//! Config-driven experiment commands behind the `selfhar` binary.

pub mod commands;
pub mod config;
pub mod data;

pub use commands::*;
pub use config::{DataSource, Protocol, Purpose, RunConfig};
