//! Training and encoder-only fine-tuning.
//!
//! Each optimization step records one mini-batch on a gradient tape: the
//! model parameters bind once, every snapshot contributes its negative-ELBO
//! subgraph, and the batch mean backpropagates into a single Adam update over
//! the selected scope. Shuffling and Monte-Carlo noise come from one seeded
//! stream, so a (seed, data, config) triple reproduces the final parameters
//! bit for bit.

use super::loss::ln_2pi;
use super::{BoundModel, DrawnNoise, LossBreakdown, ModelError, SensorSnapshot, VeliModel};
use crate::nn::{AdamConfig, AdamState, NnError, Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which parameters an optimization run may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainScope {
    All,
    /// Fine-tuning: the decoder, both priors, and the noise head stay frozen.
    EncoderOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-6,
            seed: 0,
        }
    }
}

/// Fine-tuning epoch count used when adapting to a shifted distribution.
pub const FINE_TUNE_EPOCHS: usize = 30;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training needs a non-empty dataset")]
    EmptyDataset,
    #[error("snapshot {index} has no observed channel; filter fully-masked rows before training")]
    AllMaskedSnapshot { index: usize },
    #[error("snapshot {index} has {actual} channels, model expects {expected}")]
    SnapshotDim {
        expected: usize,
        actual: usize,
        index: usize,
    },
    #[error(
        "non-finite batch loss at epoch {epoch}, batch {batch}; model retains the last finite parameters"
    )]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("at epoch {epoch}, batch {batch}: {source}")]
    Optimizer {
        epoch: usize,
        batch: usize,
        source: NnError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// KL between two head outputs, composed from tape primitives so its value
/// matches [`super::kl_diag_gaussian`] bitwise.
fn kl_on_tape(tape: &mut Tape, q: (Var, Var), p: (Var, Var)) -> Var {
    let (mq, lq) = q;
    let (mp, lp) = p;
    let dl = tape.sub(lq, lp);
    let a = tape.exp(dl);
    let dm = tape.sub(mq, mp);
    let dm2 = tape.mul(dm, dm);
    let pv = tape.exp(lp);
    let b = tape.div(dm2, pv);
    let s = tape.add(a, b);
    let s = tape.add_scalar(s, -1.0);
    let c = tape.sub(lp, lq);
    let t = tape.add(s, c);
    let half = tape.scale(t, 0.5);
    tape.sum(half)
}

/// Reparameterized sample on the tape: `mean + exp(lv/2) .* u`.
fn reparam_on_tape(tape: &mut Tape, mean: Var, log_var: Var, u: &[f64]) -> Var {
    let half = tape.scale(log_var, 0.5);
    let sd = tape.exp(half);
    let noise = tape.mul_const(sd, u);
    tape.add(mean, noise)
}

/// Builds one snapshot's loss subgraph; returns the total node plus the
/// component values for history bookkeeping.
fn snapshot_loss_on_tape(
    tape: &mut Tape,
    bound: &BoundModel,
    snap: &SensorSnapshot,
    noise: &DrawnNoise,
    model: &VeliModel,
) -> (Var, LossBreakdown) {
    let weights = &model.config.weights;
    let x = tape.leaf(snap.x().to_vec());
    let psi = tape.leaf(snap.mask().to_vec());
    let enc_in = tape.concat(&[x, psi]);
    let q_z = bound.encoder.forward(tape, enc_in);
    let p_z = bound.prior_z.forward(tape, psi);
    let kl_z = kl_on_tape(tape, q_z, p_z);

    let inv_k = 1.0 / noise.samples.len() as f64;
    let mut kl_y_acc: Option<Var> = None;
    let mut recon_acc: Option<Var> = None;
    for draw in &noise.samples {
        let z = reparam_on_tape(tape, q_z.0, q_z.1, &draw.u_z);
        let dec_in = tape.concat(&[z, x, psi]);
        let q_y = bound.decoder.forward(tape, dec_in);
        let prior_in = tape.concat(&[z, psi]);
        let p_y = bound.prior_y.forward(tape, prior_in);
        let sens = bound.noise.forward(tape, z);
        let y = reparam_on_tape(tape, q_y.0, q_y.1, &draw.u_y);

        let kl_y_k = kl_on_tape(tape, q_y, p_y);
        kl_y_acc = Some(match kl_y_acc {
            None => kl_y_k,
            Some(acc) => tape.add(acc, kl_y_k),
        });

        let xy = tape.sub(x, y);
        let resid = tape.sub(xy, sens.0);
        let sq = tape.mul(resid, resid);
        let var = tape.exp(sens.1);
        let ratio = tape.div(sq, var);
        let logterm = tape.add_scalar(sens.1, ln_2pi());
        let term = tape.add(ratio, logterm);
        let nll_k = tape.masked_sum(term, snap.mask());
        recon_acc = Some(match recon_acc {
            None => nll_k,
            Some(acc) => tape.add(acc, nll_k),
        });
    }
    let kl_y = tape.scale(kl_y_acc.unwrap(), inv_k);
    let recon = tape.scale(recon_acc.unwrap(), inv_k);

    let t1 = tape.scale(kl_z, weights.beta_z);
    let t2 = tape.scale(kl_y, weights.beta_y);
    let t3 = tape.scale(recon, weights.alpha);
    let partial = tape.add(t1, t2);
    let total = tape.add(partial, t3);

    let breakdown = LossBreakdown::new(
        tape.scalar(kl_z),
        tape.scalar(kl_y),
        tape.scalar(recon),
        weights,
    );
    (total, breakdown)
}

/// Loss of a single snapshot as a pure function of the flat parameter vector;
/// the gradient-check tests difference this.
pub fn loss_for_params(
    model: &VeliModel,
    scope: TrainScope,
    flat: &[f64],
    snap: &SensorSnapshot,
    noise: &DrawnNoise,
) -> Result<f64, TrainError> {
    let mut probe = model.clone();
    probe.set_flat_params(scope, flat);
    let fwd = probe.forward_with_noise(snap, noise)?;
    let breakdown = super::loss::loss(&fwd, snap, &probe.config.weights)
        .map_err(ModelError::from)?;
    Ok(breakdown.total)
}

/// Analytic gradient of a single snapshot's loss, flat over `scope`.
pub fn grad_for_params(
    model: &VeliModel,
    scope: TrainScope,
    snap: &SensorSnapshot,
    noise: &DrawnNoise,
) -> Result<Vec<f64>, TrainError> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let (total, _) = snapshot_loss_on_tape(&mut tape, &bound, snap, noise, model);
    let grads = tape.backward(total).map_err(|e| TrainError::Optimizer {
        epoch: 0,
        batch: 0,
        source: e,
    })?;
    let mut flat = Vec::with_capacity(model.param_count(scope));
    bound.push_grads(&grads, scope, &mut flat);
    Ok(flat)
}

fn validate_dataset(model: &VeliModel, data: &[SensorSnapshot]) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (index, snap) in data.iter().enumerate() {
        if snap.dim() != model.sensors() {
            return Err(TrainError::SnapshotDim {
                expected: model.sensors(),
                actual: snap.dim(),
                index,
            });
        }
        if snap.observed_count() == 0 {
            return Err(TrainError::AllMaskedSnapshot { index });
        }
    }
    Ok(())
}

fn run_epochs(
    model: &mut VeliModel,
    data: &[SensorSnapshot],
    config: &TrainConfig,
    scope: TrainScope,
) -> Result<Vec<LossBreakdown>, TrainError> {
    validate_dataset(model, data)?;
    assert!(config.batch_size >= 1, "batch size must be positive");
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut params = model.flat_params(scope);
    let mut adam = AdamState::new(
        params.len(),
        AdamConfig::with_learning_rate(config.learning_rate),
    );
    let weights = model.config.weights;
    let k = model.config.k_samples;
    let (r, d) = (model.latent(), model.sensors());

    let mut history = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        // Fisher-Yates off the training stream.
        for i in (1..indices.len()).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        let mut sums = (0.0, 0.0, 0.0);
        for (batch_no, batch) in indices.chunks(config.batch_size).enumerate() {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let mut batch_acc: Option<Var> = None;
            for &idx in batch {
                let noise = DrawnNoise::draw(&mut rng, k, r, d);
                let (total, breakdown) =
                    snapshot_loss_on_tape(&mut tape, &bound, &data[idx], &noise, model);
                sums.0 += breakdown.kl_z;
                sums.1 += breakdown.kl_y;
                sums.2 += breakdown.recon_nll;
                batch_acc = Some(match batch_acc {
                    None => total,
                    Some(acc) => tape.add(acc, total),
                });
            }
            let inv = 1.0 / batch.len() as f64;
            let batch_loss = tape.scale(batch_acc.unwrap(), inv);
            if !tape.scalar(batch_loss).is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            let grads = tape.backward(batch_loss).map_err(|source| TrainError::Optimizer {
                epoch,
                batch: batch_no,
                source,
            })?;
            let mut flat_grads = Vec::with_capacity(params.len());
            bound.push_grads(&grads, scope, &mut flat_grads);
            adam.step(&mut params, &flat_grads)
                .map_err(|source| TrainError::Optimizer {
                    epoch,
                    batch: batch_no,
                    source,
                })?;
            model.set_flat_params(scope, &params);
        }
        let n = data.len() as f64;
        history.push(LossBreakdown::new(
            sums.0 / n,
            sums.1 / n,
            sums.2 / n,
            &weights,
        ));
    }
    Ok(history)
}

/// Minimizes the mean negative ELBO with Adam over all parameters.
///
/// Returns one averaged [`LossBreakdown`] per epoch. Zero epochs leave the
/// model untouched and the history empty. On a non-finite batch loss the run
/// aborts with the epoch/batch index; the failing update is never applied,
/// so the model keeps its last finite parameters.
pub fn train(
    model: &mut VeliModel,
    data: &[SensorSnapshot],
    config: &TrainConfig,
) -> Result<Vec<LossBreakdown>, TrainError> {
    run_epochs(model, data, config, TrainScope::All)
}

/// Adapts a trained model to a shifted distribution by updating only the
/// encoder; the decoder, both priors, and the noise head stay bitwise frozen.
pub fn fine_tune(
    model: &mut VeliModel,
    data: &[SensorSnapshot],
    config: &TrainConfig,
) -> Result<Vec<LossBreakdown>, TrainError> {
    run_epochs(model, data, config, TrainScope::EncoderOnly)
}

/// Builds training snapshots (standardized, zero-filled, fully-masked rows
/// skipped) from optional-valued rows using the model's scaler.
pub fn snapshots_from_rows(
    scaler: &crate::pipeline::Scaler,
    rows: &[Vec<Option<f64>>],
    start_hour: crate::pipeline::HourStamp,
) -> Vec<SensorSnapshot> {
    rows.iter()
        .enumerate()
        .filter_map(|(t, row)| {
            if row.iter().all(|v| v.is_none()) {
                return None;
            }
            let (x, mask) = scaler.standardize_row(row);
            SensorSnapshot::new(x, mask, crate::pipeline::HourStamp(start_hour.0 + t as i64)).ok()
        })
        .collect()
}
