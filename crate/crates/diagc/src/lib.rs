//! File formats, run configuration, checkpoints, reports, oracle suites and
//! the command implementations behind the `diagc` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod formats;
pub mod report;
pub mod verify;
