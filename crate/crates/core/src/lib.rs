//! Recurrent cells as discrete-time dynamical systems: simulation, attractor
//! analysis, cost-landscape smoothness and desk-scale training.

pub mod analysis;
pub mod cells;
pub mod error;
pub mod linalg;
pub mod plot;
pub mod provenance;
pub mod sensitivity;
pub mod smoothness;
pub mod statespace;
pub mod training;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

/// Crate version embedded in every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
