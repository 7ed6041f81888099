//! Model checkpoints: a self-describing JSON container.
//!
//! The layout is stable and documented in the repository README: a format
//! tag, the seed and resolved-config hash of the producing run, the model
//! hyperparameters, the per-channel standardization statistics, and one
//! entry per distribution head holding layer shapes with row-major parameter
//! arrays. Numbers are written in shortest-round-trip form, so saving and
//! reloading reproduces parameters bit for bit.

use super::{GaussianHead, ModelError, VeliConfig, VeliModel};
use crate::pipeline::Scaler;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_FORMAT: &str = "veli-checkpoint-v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unsupported checkpoint format {found:?}; this build reads {CHECKPOINT_FORMAT:?}")]
    Format { found: String },
    #[error("checkpoint is internally inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Serialized model plus the provenance needed to reproduce the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: VeliConfig,
    pub scaler: Scaler,
    pub encoder: GaussianHead,
    pub prior_z: GaussianHead,
    pub decoder: GaussianHead,
    pub prior_y: GaussianHead,
    pub noise: GaussianHead,
}

impl ModelCheckpoint {
    pub fn from_model(model: &VeliModel, seed: u64, config_hash: impl Into<String>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            seed,
            config_hash: config_hash.into(),
            config: model.config.clone(),
            scaler: model.scaler.clone(),
            encoder: model.encoder.clone(),
            prior_z: model.prior_z.clone(),
            decoder: model.decoder.clone(),
            prior_y: model.prior_y.clone(),
            noise: model.noise.clone(),
        }
    }

    pub fn into_model(self) -> Result<VeliModel, CheckpointError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format { found: self.format });
        }
        self.config.validate()?;
        if self.scaler.channels() != self.config.sensors {
            return Err(CheckpointError::Inconsistent(format!(
                "scaler has {} channels, config says {}",
                self.scaler.channels(),
                self.config.sensors
            )));
        }
        let expect = [
            (self.encoder.input_dim(), 2 * self.config.sensors, "encoder"),
            (self.prior_z.input_dim(), self.config.sensors, "prior_z"),
            (
                self.decoder.input_dim(),
                self.config.latent + 2 * self.config.sensors,
                "decoder",
            ),
            (
                self.prior_y.input_dim(),
                self.config.latent + self.config.sensors,
                "prior_y",
            ),
            (self.noise.input_dim(), self.config.latent, "noise"),
        ];
        for (got, want, name) in expect {
            if got != want {
                return Err(CheckpointError::Inconsistent(format!(
                    "{name} head expects input {want}, found {got}"
                )));
            }
        }
        Ok(VeliModel {
            config: self.config,
            scaler: self.scaler,
            encoder: self.encoder,
            prior_z: self.prior_z,
            decoder: self.decoder,
            prior_y: self.prior_y,
            noise: self.noise,
        })
    }

    pub fn to_json(&self) -> Result<String, CheckpointError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
