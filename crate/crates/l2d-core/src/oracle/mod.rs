//! Conditional risks, Bayes decision rules, closed-form infima, Γ
//! evaluators, grid minimization and numeric bound verification.

mod bayes;
mod consistency;
mod fdcheck;
mod gamma;
mod gap;
mod minimize;
mod verify;

pub use bayes::*;
pub use consistency::*;
pub use fdcheck::*;
pub use gamma::*;
pub use gap::*;
pub use minimize::*;
pub use verify::*;
