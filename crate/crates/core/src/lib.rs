//! Estimating historical GDP per capita from biography records.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: SVD, least squares, standardization, rank tests, fit metrics.
//! - [`ingest`]: CSV loading and validation, eligibility filter, location flows.
//! - [`features`]: popularity weights, complexity measures, SVD factors, the
//!   lagged-income fallback chain and the assembled feature matrices.
//! - [`elasticnet`]: coordinate-descent elastic net, regularization paths and
//!   cross-validated hyperparameter search.
//! - [`pipeline`]: baseline model, per-period training, gated prediction,
//!   regional rescaling, bootstrap intervals and the full estimation run.
//! - [`evaluation`]: country-held-out performance protocol and proxy correlations.
//! - [`explain`]: Shapley attributions.

pub mod config;
pub mod elasticnet;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod features;
pub mod ingest;
pub mod numerics;
pub mod pipeline;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
