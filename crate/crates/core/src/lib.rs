//! Filter-then-generate knowledge graph completion.

pub mod adapter;
pub mod checkpoint;
pub mod ego;
pub mod error;
pub mod eval;
pub mod filter;
pub mod instruct;
pub mod kg;
pub mod kge;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
