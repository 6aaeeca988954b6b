//! Article quality score prediction from bibliometric and textual metadata.

pub mod aggregate;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod indicators;
pub mod models;
pub mod pipeline;
pub mod strategies;
pub mod synth;
pub mod text;
pub mod util;

pub use error::{Error, Result};
