//! Command-line harness for weight-space functional transformers: run
//! configuration, on-disk formats for signals, SIREN datasets and
//! checkpoints, the verification suites and the subcommands.

#![allow(clippy::needless_range_loop)]

pub mod blob;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod ppm;
pub mod verify;

pub use error::{Error, Result};
