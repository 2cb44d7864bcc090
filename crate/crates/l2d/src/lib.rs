//! Command drivers around `l2d-core`: JSON configs, CSV and JSON writers, and
//! the experiment runners behind the `l2d` binary.
//!
//! Every command is a pure function of its config file. Trials may run on a
//! rayon pool, but results are collected in config order, so outputs are
//! byte-identical across runs and thread counts.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use error::{CliError, Outcome};
