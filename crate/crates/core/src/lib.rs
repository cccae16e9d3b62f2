//! Low-dimensional knowledge graph embeddings distilled from multiple
//! hyperbolic teachers.

pub mod dimbound;
pub mod distill;
pub mod error;
pub mod eval;
pub mod kgdata;
pub mod manifold;
pub mod models;
pub mod optim;
pub mod toy;

pub use error::{Error, Result};
