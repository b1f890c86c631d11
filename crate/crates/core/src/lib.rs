//! Spectral recommender engine for typed semantic networks.
//!
//! A dataset of typed entities and relationships is normalized per
//! relationship, weighted, and aggregated into one symmetric matrix whose
//! truncated eigendecomposition gives every entity a latent vector.
//! Recommendations are top-k inner-product queries over those vectors,
//! answered through a clustered index.

pub mod aggregate;
pub mod cli;
pub mod config;
pub mod eigen;
pub mod error;
pub mod graph;
pub mod index;
pub mod iptv;
pub mod learn;
pub mod linalg;
pub mod manifest;
pub mod model;
pub mod normalize;
pub mod num;
pub mod pipeline;

pub use error::{Error, Result};
