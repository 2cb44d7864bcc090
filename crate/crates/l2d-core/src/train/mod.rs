//! Full-batch gradient-descent trainers for linear and one-hidden-layer
//! models, the single- and two-stage pipelines, and system metrics.

mod fit;
mod model;
mod pipeline;
mod search;

pub use fit::*;
pub use model::*;
pub use pipeline::*;
pub use search::*;
