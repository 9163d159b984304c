//! Distributed online linear regression over a network of nodes.

pub mod data;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod projection;
pub mod protocol;
pub mod seed;

pub use error::{Error, Result};
