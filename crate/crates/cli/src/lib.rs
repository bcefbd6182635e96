//! Command-line driver: configuration, report bundles, CSV/JSON/SVG output.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod svg;

pub use error::CliError;
