//! Run configuration: file values, flag overrides, and the run manifest.
//!
//! Config files are flat TOML (`key = value`; see the README for the full
//! grammar). Every run writes a `manifest.toml` into its output directory
//! holding the fully resolved configuration, the seed, the binary version,
//! and a SHA-256 hash of the resolved parameter block. Re-running any
//! subcommand from an identical manifest reproduces its outputs byte for
//! byte, so manifests never carry wall-clock information.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::CliError;

/// Resolved model/training parameters; defaults follow the reported setup
/// (100 epochs, batch 64, learning rate 1e-6, weights 1/10/0.1, 30
/// fine-tuning epochs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Params {
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub latent: usize,
    pub hidden: usize,
    pub k_samples: usize,
    pub alpha: f64,
    pub beta_z: f64,
    pub beta_y: f64,
    pub train_fraction: f64,
    pub min_observed: usize,
    pub finetune_epochs: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch: 64,
            learning_rate: 1e-6,
            latent: 4,
            hidden: 32,
            k_samples: 1,
            alpha: 1.0,
            beta_z: 10.0,
            beta_y: 0.1,
            train_fraction: 1.0,
            min_observed: 1,
            finetune_epochs: 30,
        }
    }
}

/// Optional file-provided values; any present key overrides the default and
/// any explicit CLI flag overrides the file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub learning_rate: Option<f64>,
    pub latent: Option<usize>,
    pub hidden: Option<usize>,
    pub k_samples: Option<usize>,
    pub alpha: Option<f64>,
    pub beta_z: Option<f64>,
    pub beta_y: Option<f64>,
    pub train_fraction: Option<f64>,
    pub min_observed: Option<usize>,
    pub finetune_epochs: Option<usize>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }

    pub fn apply(&self, params: &mut Params) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { params.$field = v; })*
            };
        }
        take!(
            epochs,
            batch,
            learning_rate,
            latent,
            hidden,
            k_samples,
            alpha,
            beta_z,
            beta_y,
            train_fraction,
            min_observed,
            finetune_epochs
        );
    }
}

/// The manifest written next to every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub run: RunBlock,
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<veli_core::synth::NoiseConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunBlock {
    pub subcommand: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(
        subcommand: &str,
        seed: u64,
        params: Params,
        noise: Option<veli_core::synth::NoiseConfig>,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
    ) -> Result<Self, CliError> {
        let params_text = toml::to_string(&params)
            .map_err(|e| CliError::config(format!("cannot serialize params: {e}")))?;
        let noise_text = match &noise {
            Some(n) => toml::to_string(n)
                .map_err(|e| CliError::config(format!("cannot serialize noise: {e}")))?,
            None => String::new(),
        };
        let mut hasher = Sha256::new();
        hasher.update(subcommand.as_bytes());
        hasher.update(seed.to_le_bytes());
        hasher.update(params_text.as_bytes());
        hasher.update(noise_text.as_bytes());
        let config_hash = hex::encode(hasher.finalize());
        Ok(Self {
            run: RunBlock {
                subcommand: subcommand.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config_hash,
                inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
                outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
                notes: Vec::new(),
            },
            params,
            noise,
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.run.config_hash
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::config(format!("cannot serialize manifest: {e}")))?;
        write_atomic(&out_dir.join("manifest.toml"), text.as_bytes())
    }
}

/// Writes through a temp file in the same directory, then renames into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| {
        CliError::data(format!("cannot write {}: {e}", tmp.display()))
    })?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::data(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}

/// Creates the output directory if needed.
pub fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}
