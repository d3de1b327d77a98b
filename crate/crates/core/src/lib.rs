pub mod cli;
pub mod conditions;
pub mod engine;
pub mod error;
pub mod estimate;
pub mod indexing;
pub mod inequalities;
pub mod model;
pub mod quad;
pub mod sampling;
pub mod seeds;
pub mod series;
pub mod truncation;
pub use error::{Error, Result};
