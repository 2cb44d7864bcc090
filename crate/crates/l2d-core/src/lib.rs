//! Surrogate losses, decision rules, Bayes oracles and trainers for
//! multi-class abstention and multi-expert deferral.
//!
//! The crate is `no_std` and needs only `alloc`. Float transcendentals come
//! from `libm`, so results are bitwise reproducible across platforms that
//! share the same `libm` build.
//!
//! Label conventions used throughout:
//!
//! - classes are `0..n`;
//! - in score-based abstention the abstain label is `n`;
//! - in score-based deferral expert `j` (0-based) owns augmented label `n + j`;
//! - rejector scores are indexed `0..=n_e`, where index `0` keeps the
//!   base model and index `j + 1` defers to expert `j`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod base;
pub mod error;
pub mod math;
pub mod model;
pub mod oracle;
pub mod surrogate;
pub mod synth;
pub mod target;
pub mod train;

pub use error::{Error, Result};
