//! Meta-learned temporal knowledge graph extrapolation: learns
//! transferable relation patterns on one graph and embeds the unseen
//! entities and relations of emerging graphs for link prediction.

pub mod autodiff;
pub mod checkpoint;
pub mod decoders;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod patterns;
pub mod synthetic;
pub mod tkg;
pub mod training;

pub use error::{Error, Result};
