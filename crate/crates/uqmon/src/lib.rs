//! Study orchestration for `uqmon-core`: configuration, file formats,
//! latency benchmarks and the `uqmon` command line.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod study;

pub use error::{Error, Result};
pub use uqmon_core as core;
