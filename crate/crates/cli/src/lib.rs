//! Command-line front end: file formats, run configuration, manifests and
//! the subcommands driving the pipeline.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pool;
