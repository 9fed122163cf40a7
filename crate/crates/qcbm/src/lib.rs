//! Experiment runner, file formats and CLI.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod report;
