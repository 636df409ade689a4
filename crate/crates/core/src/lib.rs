//! Hyper-relational knowledge-graph completion for network alerts.
//!
//! The crate holds a small reverse-mode differentiation engine, alert
//! ingestion and graph construction, five completion models, complex-query
//! answering, and a training and filtered-ranking harness.

pub mod config;
pub mod diff;
pub mod enrich;
pub mod error;
pub mod kg;
pub mod layers;
pub mod models;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
