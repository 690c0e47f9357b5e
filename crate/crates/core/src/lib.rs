//! Graph language models on top of a relative-position transformer encoder.
//!
//! Pipeline: [`graph`] turns triplets into an extended Levi graph,
//! [`position`] compiles it into relative positions and an attention mask,
//! [`encoder`] runs the biased encoder, [`train`] fits classification heads,
//! and [`data`] builds datasets.

pub mod data;
pub mod encoder;
pub mod error;
pub mod features;
pub mod graph;
pub mod position;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
