//! Cache placement and cooperative transmission for a two-gateway network
//! with a shared cache-enabled relay station.
//!
//! Modules, bottom up:
//! - [`model`]: scenario, cache vectors, request profiles, user partitions.
//! - [`analytics`]: stream packing, cooperation probability, DoF, curvature.
//! - [`sampler`]: Zipf request profiles.
//! - [`optimizer`]: placement polyhedron, vertex walk, baselines.
//! - [`simulator`]: slot-level scheduling and delivery.
//! - [`phy`]: zero-forcing beamformers and the finite-SNR DoF check.
//! - [`experiment`]: capacity sweeps comparing placement schemes.

pub mod analytics;
pub mod error;
pub mod experiment;
pub mod model;
pub mod optimizer;
pub mod phy;
pub mod rng;
pub mod sampler;
pub mod simulator;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use model::{Bs, CacheVector, FileId, NetworkConfig, Urp, UserPartition};
