//! Label distribution learning with label-specific features (LIFT-SAP).
//!
//! The crate is organized bottom-up:
//!
//! * [`dataset`] loads and splits label-distribution datasets.
//! * [`partition`] divides training instances into positive, negative and
//!   uncertain sets per label.
//! * [`clustering`] provides spectral clustering, k-means and block
//!   formation behind the [`clustering::Clusterer`] registry.
//! * [`lsf`] builds the per-label feature mappers (prototype distances,
//!   anchor-point distances and anchor-point directions).
//! * [`maxent`] holds the BFGS optimizer and the maximum-entropy base and
//!   meta learners.
//! * [`pipeline`] stacks everything into a trainable predictor.
//! * [`metrics`] and [`stats`] evaluate predictions and compare algorithms.
//! * [`experiment`] is the repeated-trial benchmark harness used by the CLI.

pub mod clustering;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod lsf;
pub mod maxent;
pub mod metrics;
mod numeric;
pub mod partition;
pub mod pipeline;
pub mod seed;
pub mod stats;
pub mod synthetic;
pub mod variant;

pub use error::{LdlError, Result};
