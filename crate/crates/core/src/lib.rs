pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod export;
pub mod generator;
pub mod geometry;
pub mod nn;
pub mod reasoner;
pub mod registry;
pub mod synth;
pub mod text;
pub mod tokenizer;

pub use error::{Error, Result};
