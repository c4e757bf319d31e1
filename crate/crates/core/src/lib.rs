pub mod error;
pub mod exact;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod particle;

pub use error::{Error, Result};
