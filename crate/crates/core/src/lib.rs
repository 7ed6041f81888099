//! Reference-free correction of low-cost air-quality sensor readings.
//!
//! A fleet of co-located low-cost PM2.5 sensors produces hourly readings that
//! are noisy, biased, and full of gaps. This crate learns to correct them
//! without ever seeing a reference station: a conditional variational model
//! encodes each hourly snapshot (readings plus an observation mask) into a
//! low-dimensional latent fused reading, and decodes a clean per-channel
//! estimate while a separate heteroscedastic head absorbs the sensor noise.
//!
//! The crate is organized around that workflow:
//!
//! - [`nn`] — minimal dense networks with reverse-mode gradients and Adam.
//! - [`model`] — the conditional variational model: encoder, decoder,
//!   mask-conditioned priors, noise head, the three-term negative ELBO,
//!   training, encoder-only fine-tuning, and inference with credible
//!   intervals.
//! - [`pipeline`] — ingestion and preprocessing: hourly resampling, range
//!   validation, DBSCAN outlier scrubbing, location assembly, eligibility
//!   filtering, and standardization.
//! - [`synth`] — synthetic data streams: base signals plus compositional
//!   Gaussian / multiplicative / spike / NA noise.
//! - [`baselines`] — classical comparisons: KNN imputation, Kalman-filter
//!   fusion, and PCA denoising.
//! - [`eval`] — MAE, hit-rate curves, autocorrelation profiles, seed
//!   repetition, and the ablation drivers (NA injection, sensor subsets,
//!   loss-weight sweeps).
//!
//! All numerics are f64 and every random choice flows from an explicit seed,
//! so identical inputs reproduce identical outputs bit for bit.

pub mod baselines;
pub mod eval;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod synth;

pub use model::{
    CorrectedReading, GaussianParams, LossBreakdown, LossWeights, SensorSnapshot, VeliConfig,
    VeliModel,
};
pub use pipeline::HourStamp;
