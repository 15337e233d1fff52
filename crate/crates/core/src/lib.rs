//! Variational recurrent anomaly detection on graph time series.
//!
//! The crate is organised bottom-up:
//!
//! * [`diffmath`] - tensors, tape-based gradients, Gaussian helpers, ADAM
//! * [`graph`] - weighted graphs, the normalized Laplacian and Chebyshev filters
//! * [`model`] - the recurrent latent-variable network over graph signals
//! * [`training`] - ELBO maximisation and checkpoints
//! * [`detection`] - per-step scoring and likelihood-ratio localisation
//! * [`experiment`] - synthetic grid traffic, anomaly injection and metrics

pub mod detection;
pub mod diffmath;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod model;
pub mod series;
pub mod training;

pub use error::{Error, Result};
pub use series::GraphSeries;
