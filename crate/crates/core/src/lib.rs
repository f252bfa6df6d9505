//! Quote-aware retrieval, assembly and evaluation for turning long
//! documentaries into short teasers.

pub mod assembler;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod retriever;
pub mod rng;
pub mod script;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
