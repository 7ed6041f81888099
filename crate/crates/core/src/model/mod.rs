//! The conditional variational correction model.
//!
//! Each hourly snapshot is a standardized reading vector `x` with an
//! observation mask `psi`. An encoder maps `(x, psi)` to a diagonal Gaussian
//! over a low-dimensional latent `z` — the fused reading. A decoder maps
//! `(z, x, psi)` to a Gaussian over the clean per-channel estimate `y`, while
//! two mask-conditioned prior networks regularize both posteriors and a
//! heteroscedastic noise head `(mu_sens(z), sigma2_sens(z))` absorbs the
//! sensor noise in the reconstruction term. Training minimizes the negative
//! evidence lower bound
//!
//! ```text
//! L = beta_z KL(q(z|x,psi) || p(z|psi))
//!   + beta_y KL(q(y|z,x,psi) || p(y|z,psi))
//!   + alpha  sum_i psi_i [ ln(2 pi sigma2_i(z)) + (x_i - y_i - mu_i(z))^2 / sigma2_i(z) ]
//! ```
//!
//! with reparameterized samples for `z` and `y`. Masked channels contribute
//! nothing to the reconstruction sum: they carry no information about sensor
//! noise. Inference is deterministic — `z` and `y` are taken at their
//! posterior means — and de-standardizes back to physical units with a
//! per-channel credible scale.
//!
//! Every head shares one shape: two hidden layers (width 32, softplus) and
//! one linear layer each for the mean and the log-variance, the latter
//! clamped to `[-10, 10]`.

mod checkpoint;
mod infer;
mod loss;
mod train;

pub use checkpoint::{CheckpointError, ModelCheckpoint, CHECKPOINT_FORMAT};
pub use infer::{infer, infer_sampled, CorrectedReading};
pub use loss::{kl_diag_gaussian, loss, reconstruction_nll, LossBreakdown};
pub use train::{
    fine_tune, grad_for_params, loss_for_params, snapshots_from_rows, train, TrainConfig,
    TrainError, TrainScope, FINE_TUNE_EPOCHS,
};

use crate::nn::{Activation, BoundNet, DenseNet, NnError, Tape, Var};
use crate::pipeline::{HourStamp, Scaler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Log-variance clamp bound shared by every distribution head.
pub const LOG_VAR_CLAMP: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("snapshot has {actual} channels, model expects {expected}")]
    SnapshotDim { expected: usize, actual: usize },
    #[error("mask entry {index} is {value}; masks are 0/1")]
    MaskValue { index: usize, value: f64 },
    #[error("masked channel {index} carries a non-zero value; zero-fill before building snapshots")]
    MaskedValueNonZero { index: usize },
    #[error("non-finite reading at channel {index}")]
    NonFiniteReading { index: usize },
    #[error("snapshot needs at least one channel")]
    EmptySnapshot,
    #[error("latent dimension {latent} must not exceed sensor count {sensors}")]
    LatentTooLarge { latent: usize, sensors: usize },
    #[error("loss weights must be positive (alpha={alpha}, beta_z={beta_z}, beta_y={beta_y})")]
    BadWeights { alpha: f64, beta_z: f64, beta_y: f64 },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// A diagonal Gaussian emitted by a distribution head.
///
/// The log-variance is clamped to `[-LOG_VAR_CLAMP, LOG_VAR_CLAMP]` at
/// construction, so the implied covariance is always positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    mean: Vec<f64>,
    log_variance: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, log_variance: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_variance.len(), "mean/log-variance length");
        let log_variance = log_variance
            .into_iter()
            .map(|v| v.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP))
            .collect();
        Self { mean, log_variance }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_variance(&self) -> &[f64] {
        &self.log_variance
    }

    /// Per-dimension standard deviation `exp(log_variance / 2)`.
    pub fn std(&self) -> Vec<f64> {
        self.log_variance.iter().map(|lv| (lv * 0.5).exp()).collect()
    }
}

/// Reparameterized sample: `mean + exp(log_variance/2) .* u` with `u` drawn
/// standard normal from `rng`. Deterministic given the seed.
pub fn reparam_sample<R: Rng + ?Sized>(params: &GaussianParams, rng: &mut R) -> Vec<f64> {
    let u: Vec<f64> = (0..params.dim()).map(|_| rng.sample(StandardNormal)).collect();
    reparam_with(params, &u)
}

/// Reparameterization with the noise vector supplied by the caller.
pub fn reparam_with(params: &GaussianParams, u: &[f64]) -> Vec<f64> {
    assert_eq!(u.len(), params.dim());
    params
        .mean
        .iter()
        .zip(params.log_variance.iter())
        .zip(u.iter())
        .map(|((m, lv), ui)| m + (lv * 0.5).exp() * ui)
        .collect()
}

/// One hourly vector of standardized readings plus its observation mask.
///
/// Masked channels are zero-filled; the mask carries the missingness signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSnapshot {
    x: Vec<f64>,
    mask: Vec<f64>,
    pub hour: HourStamp,
}

impl SensorSnapshot {
    pub fn new(x: Vec<f64>, mask: Vec<f64>, hour: HourStamp) -> Result<Self, ModelError> {
        if x.is_empty() {
            return Err(ModelError::EmptySnapshot);
        }
        if x.len() != mask.len() {
            return Err(ModelError::SnapshotDim {
                expected: x.len(),
                actual: mask.len(),
            });
        }
        for (i, (&v, &m)) in x.iter().zip(mask.iter()).enumerate() {
            if m != 0.0 && m != 1.0 {
                return Err(ModelError::MaskValue { index: i, value: m });
            }
            if m == 0.0 && v != 0.0 {
                return Err(ModelError::MaskedValueNonZero { index: i });
            }
            if !v.is_finite() {
                return Err(ModelError::NonFiniteReading { index: i });
            }
        }
        Ok(Self { x, mask, hour })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1.0).count()
    }

    /// Copy with the given channels forced to NA (mask 0, value zero-filled).
    pub fn with_channels_masked(&self, channels: &[usize]) -> SensorSnapshot {
        let mut x = self.x.clone();
        let mut mask = self.mask.clone();
        for &c in channels {
            x[c] = 0.0;
            mask[c] = 0.0;
        }
        SensorSnapshot {
            x,
            mask,
            hour: self.hour,
        }
    }
}

/// Weights of the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta_z: f64,
    pub beta_y: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta_z: 10.0,
            beta_y: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.alpha > 0.0 && self.beta_z > 0.0 && self.beta_y > 0.0 {
            Ok(())
        } else {
            Err(ModelError::BadWeights {
                alpha: self.alpha,
                beta_z: self.beta_z,
                beta_y: self.beta_y,
            })
        }
    }
}

/// Model hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VeliConfig {
    /// Sensor count d.
    pub sensors: usize,
    /// Latent dimension r (must satisfy r <= d).
    pub latent: usize,
    /// Hidden width of every head.
    pub hidden: usize,
    /// Monte-Carlo samples per datum per step.
    pub k_samples: usize,
    pub weights: LossWeights,
}

impl VeliConfig {
    pub fn new(sensors: usize) -> Self {
        Self {
            sensors,
            latent: 4.min(sensors),
            hidden: 32,
            k_samples: 1,
            weights: LossWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.sensors == 0 {
            return Err(ModelError::EmptySnapshot);
        }
        if self.latent > self.sensors {
            return Err(ModelError::LatentTooLarge {
                latent: self.latent,
                sensors: self.sensors,
            });
        }
        assert!(self.hidden > 0 && self.k_samples > 0);
        self.weights.validate()
    }
}

/// One distribution head: a two-layer trunk and linear mean / log-variance
/// branches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianHead {
    trunk: DenseNet,
    mean: DenseNet,
    log_var: DenseNet,
}

impl GaussianHead {
    /// Trunk layers draw Xavier-uniform weights; the mean and log-variance
    /// branches start at zero so every head begins as exactly N(0, I). A
    /// randomly initialized branch would hand each head an O(1) output
    /// offset that the translation-invariant reconstruction never pulls
    /// back, and the offset survives de-standardization as a per-seed bias.
    fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let zero_layer = |inp: usize, out: usize| {
            DenseNet::new(vec![crate::nn::Layer {
                in_dim: inp,
                out_dim: out,
                weights: vec![0.0; inp * out],
                bias: vec![0.0; out],
                activation: Activation::Identity,
            }])
        };
        Self {
            trunk: DenseNet::init(
                &[input, hidden, hidden],
                Activation::Softplus,
                Activation::Softplus,
                rng,
            ),
            mean: zero_layer(hidden, output),
            log_var: zero_layer(hidden, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.mean.output_dim()
    }

    /// Plain (tape-free) evaluation.
    pub fn forward(&self, input: &[f64]) -> Result<GaussianParams, NnError> {
        let h = self.trunk.forward(input)?;
        let mean = self.mean.forward(&h)?;
        let log_var = self.log_var.forward(&h)?;
        Ok(GaussianParams::new(mean, log_var))
    }

    fn bind(&self, tape: &mut Tape) -> BoundHead {
        BoundHead {
            trunk: self.trunk.bind(tape),
            mean: self.mean.bind(tape),
            log_var: self.log_var.bind(tape),
        }
    }

    fn param_count(&self) -> usize {
        self.trunk.param_count() + self.mean.param_count() + self.log_var.param_count()
    }

    fn push_flat(&self, out: &mut Vec<f64>) {
        self.trunk.push_flat(out);
        self.mean.push_flat(out);
        self.log_var.push_flat(out);
    }

    fn read_flat(&mut self, vals: &[f64]) -> usize {
        let mut off = self.trunk.read_flat(vals);
        off += self.mean.read_flat(&vals[off..]);
        off += self.log_var.read_flat(&vals[off..]);
        off
    }
}

pub(crate) struct BoundHead {
    trunk: BoundNet,
    mean: BoundNet,
    log_var: BoundNet,
}

impl BoundHead {
    /// Returns (mean, clamped log-variance) nodes.
    pub(crate) fn forward(&self, tape: &mut Tape, input: Var) -> (Var, Var) {
        let h = self.trunk.forward(tape, input);
        let mean = self.mean.forward(tape, h);
        let lv_raw = self.log_var.forward(tape, h);
        let lv = tape.clamp(lv_raw, -LOG_VAR_CLAMP, LOG_VAR_CLAMP);
        (mean, lv)
    }

    fn push_grads(&self, grads: &crate::nn::Gradients, out: &mut Vec<f64>) {
        self.trunk.push_grads(grads, out);
        self.mean.push_grads(grads, out);
        self.log_var.push_grads(grads, out);
    }
}

/// Parameter container for the full model plus the standardization scaler.
#[derive(Debug, Clone)]
pub struct VeliModel {
    pub config: VeliConfig,
    pub scaler: Scaler,
    pub(crate) encoder: GaussianHead,
    pub(crate) prior_z: GaussianHead,
    pub(crate) decoder: GaussianHead,
    pub(crate) prior_y: GaussianHead,
    pub(crate) noise: GaussianHead,
}

impl VeliModel {
    /// Seeded initialization; heads are created in a fixed order so identical
    /// seeds give identical parameters.
    pub fn new(config: VeliConfig, scaler: Scaler, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        assert_eq!(
            scaler.channels(),
            config.sensors,
            "scaler channels must match sensor count"
        );
        let d = config.sensors;
        let r = config.latent;
        let h = config.hidden;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Ok(Self {
            encoder: GaussianHead::init(2 * d, h, r, &mut rng),
            prior_z: GaussianHead::init(d, h, r, &mut rng),
            decoder: GaussianHead::init(r + 2 * d, h, d, &mut rng),
            prior_y: GaussianHead::init(r + d, h, d, &mut rng),
            noise: GaussianHead::init(r, h, d, &mut rng),
            config,
            scaler,
        })
    }

    pub fn sensors(&self) -> usize {
        self.config.sensors
    }

    pub fn latent(&self) -> usize {
        self.config.latent
    }

    fn check_snapshot(&self, snap: &SensorSnapshot) -> Result<(), ModelError> {
        if snap.dim() != self.config.sensors {
            return Err(ModelError::SnapshotDim {
                expected: self.config.sensors,
                actual: snap.dim(),
            });
        }
        Ok(())
    }

    /// Encoder posterior `q(z | x, psi)`.
    pub fn encode(&self, snap: &SensorSnapshot) -> Result<GaussianParams, ModelError> {
        self.check_snapshot(snap)?;
        let mut input = Vec::with_capacity(2 * snap.dim());
        input.extend_from_slice(snap.x());
        input.extend_from_slice(snap.mask());
        Ok(self.encoder.forward(&input)?)
    }

    /// Full stochastic forward pass with `k` Monte-Carlo samples.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        snap: &SensorSnapshot,
        rng: &mut R,
        k: usize,
    ) -> Result<VeliForward, ModelError> {
        let noise = DrawnNoise::draw(rng, k, self.config.latent, self.config.sensors);
        self.forward_with_noise(snap, &noise)
    }

    /// Forward pass with caller-supplied noise; the loss becomes a
    /// deterministic function of the parameters, which is what the
    /// finite-difference gradient checks rely on.
    pub fn forward_with_noise(
        &self,
        snap: &SensorSnapshot,
        noise: &DrawnNoise,
    ) -> Result<VeliForward, ModelError> {
        self.check_snapshot(snap)?;
        assert!(!noise.samples.is_empty(), "need at least one sample");
        let d = snap.dim();
        let q_z = self.encode(snap)?;
        let p_z = self.prior_z.forward(snap.mask())?;
        let mut samples = Vec::with_capacity(noise.samples.len());
        for draw in &noise.samples {
            let z = reparam_with(&q_z, &draw.u_z);
            let mut dec_in = Vec::with_capacity(z.len() + 2 * d);
            dec_in.extend_from_slice(&z);
            dec_in.extend_from_slice(snap.x());
            dec_in.extend_from_slice(snap.mask());
            let q_y = self.decoder.forward(&dec_in)?;
            let mut prior_in = Vec::with_capacity(z.len() + d);
            prior_in.extend_from_slice(&z);
            prior_in.extend_from_slice(snap.mask());
            let p_y = self.prior_y.forward(&prior_in)?;
            let sens = self.noise.forward(&z)?;
            let y = reparam_with(&q_y, &draw.u_y);
            samples.push(SampleForward {
                z,
                q_y,
                p_y,
                sens,
                y,
            });
        }
        Ok(VeliForward { q_z, p_z, samples })
    }

    pub(crate) fn heads(&self) -> [&GaussianHead; 5] {
        [
            &self.encoder,
            &self.prior_z,
            &self.decoder,
            &self.prior_y,
            &self.noise,
        ]
    }

    pub(crate) fn heads_mut(&mut self) -> [&mut GaussianHead; 5] {
        [
            &mut self.encoder,
            &mut self.prior_z,
            &mut self.decoder,
            &mut self.prior_y,
            &mut self.noise,
        ]
    }

    /// Flat view of the trainable parameters under `scope`.
    pub fn flat_params(&self, scope: TrainScope) -> Vec<f64> {
        let mut out = Vec::new();
        match scope {
            TrainScope::All => {
                for head in self.heads() {
                    head.push_flat(&mut out);
                }
            }
            TrainScope::EncoderOnly => self.encoder.push_flat(&mut out),
        }
        out
    }

    /// Writes a flat parameter vector back under `scope`.
    pub fn set_flat_params(&mut self, scope: TrainScope, vals: &[f64]) {
        match scope {
            TrainScope::All => {
                let mut off = 0;
                for head in self.heads_mut() {
                    off += head.read_flat(&vals[off..]);
                }
                assert_eq!(off, vals.len(), "flat parameter length mismatch");
            }
            TrainScope::EncoderOnly => {
                let used = self.encoder.read_flat(vals);
                assert_eq!(used, vals.len(), "flat parameter length mismatch");
            }
        }
    }

    pub fn param_count(&self, scope: TrainScope) -> usize {
        match scope {
            TrainScope::All => self.heads().iter().map(|h| h.param_count()).sum(),
            TrainScope::EncoderOnly => self.encoder.param_count(),
        }
    }

    pub(crate) fn bind(&self, tape: &mut Tape) -> BoundModel {
        BoundModel {
            encoder: self.encoder.bind(tape),
            prior_z: self.prior_z.bind(tape),
            decoder: self.decoder.bind(tape),
            prior_y: self.prior_y.bind(tape),
            noise: self.noise.bind(tape),
        }
    }
}

pub(crate) struct BoundModel {
    pub(crate) encoder: BoundHead,
    pub(crate) prior_z: BoundHead,
    pub(crate) decoder: BoundHead,
    pub(crate) prior_y: BoundHead,
    pub(crate) noise: BoundHead,
}

impl BoundModel {
    pub(crate) fn push_grads(
        &self,
        grads: &crate::nn::Gradients,
        scope: TrainScope,
        out: &mut Vec<f64>,
    ) {
        match scope {
            TrainScope::All => {
                self.encoder.push_grads(grads, out);
                self.prior_z.push_grads(grads, out);
                self.decoder.push_grads(grads, out);
                self.prior_y.push_grads(grads, out);
                self.noise.push_grads(grads, out);
            }
            TrainScope::EncoderOnly => self.encoder.push_grads(grads, out),
        }
    }
}

/// Pre-drawn standard-normal noise for `k` Monte-Carlo samples.
#[derive(Debug, Clone)]
pub struct DrawnNoise {
    pub samples: Vec<SampleNoise>,
}

#[derive(Debug, Clone)]
pub struct SampleNoise {
    pub u_z: Vec<f64>,
    pub u_y: Vec<f64>,
}

impl DrawnNoise {
    /// Draw order is fixed: for each sample, `r` latent draws then `d`
    /// observation draws.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, k: usize, r: usize, d: usize) -> Self {
        let samples = (0..k.max(1))
            .map(|_| SampleNoise {
                u_z: (0..r).map(|_| rng.sample(StandardNormal)).collect(),
                u_y: (0..d).map(|_| rng.sample(StandardNormal)).collect(),
            })
            .collect();
        Self { samples }
    }

    /// All-zero noise: samples collapse to the distribution means.
    pub fn zeros(k: usize, r: usize, d: usize) -> Self {
        Self {
            samples: (0..k.max(1))
                .map(|_| SampleNoise {
                    u_z: vec![0.0; r],
                    u_y: vec![0.0; d],
                })
                .collect(),
        }
    }
}

/// Result of one stochastic forward pass.
#[derive(Debug, Clone)]
pub struct VeliForward {
    pub q_z: GaussianParams,
    pub p_z: GaussianParams,
    pub samples: Vec<SampleForward>,
}

/// Quantities tied to one latent sample.
#[derive(Debug, Clone)]
pub struct SampleForward {
    pub z: Vec<f64>,
    pub q_y: GaussianParams,
    pub p_y: GaussianParams,
    pub sens: GaussianParams,
    pub y: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snapshot(x: Vec<f64>, mask: Vec<f64>) -> SensorSnapshot {
        SensorSnapshot::new(x, mask, HourStamp(0)).unwrap()
    }

    fn tiny_model(seed: u64) -> VeliModel {
        let mut config = VeliConfig::new(3);
        config.latent = 2;
        config.hidden = 4;
        VeliModel::new(config, Scaler::identity(3), seed).unwrap()
    }

    #[test]
    fn snapshot_rejects_raw_na_leakage() {
        let err = SensorSnapshot::new(vec![1.0, 2.0], vec![1.0, 0.0], HourStamp(0));
        assert!(matches!(err, Err(ModelError::MaskedValueNonZero { index: 1 })));
    }

    #[test]
    fn snapshot_rejects_non_binary_mask() {
        let err = SensorSnapshot::new(vec![1.0], vec![0.5], HourStamp(0));
        assert!(matches!(err, Err(ModelError::MaskValue { index: 0, .. })));
    }

    #[test]
    fn latent_larger_than_sensors_is_rejected() {
        let mut config = VeliConfig::new(3);
        config.latent = 4;
        assert!(matches!(
            VeliModel::new(config, Scaler::identity(3), 0),
            Err(ModelError::LatentTooLarge { .. })
        ));
    }

    #[test]
    fn reparam_at_clamp_floor_stays_near_mean() {
        let p = GaussianParams::new(vec![2.0], vec![-30.0]);
        assert_eq!(p.log_variance()[0], -LOG_VAR_CLAMP);
        for u in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let s = reparam_with(&p, &[u]);
            assert!((s[0] - 2.0).abs() < 0.03, "sample {s:?} strayed from mean");
        }
    }

    #[test]
    fn reparam_same_seed_is_identical() {
        let p = GaussianParams::new(vec![1.0, -2.0], vec![0.3, 0.7]);
        let mut rng1 = ChaCha20Rng::seed_from_u64(5);
        let mut rng2 = ChaCha20Rng::seed_from_u64(5);
        assert_eq!(reparam_sample(&p, &mut rng1), reparam_sample(&p, &mut rng2));
    }

    /// Monte-Carlo oracle: the empirical mean of N(2, 4) samples lands within
    /// three standard errors of 2.
    #[test]
    fn reparam_empirical_mean_matches() {
        let p = GaussianParams::new(vec![2.0], vec![4.0f64.ln()]);
        let mut rng = ChaCha20Rng::seed_from_u64(123);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += reparam_sample(&p, &mut rng)[0];
        }
        let mean = acc / n as f64;
        let tol = 3.0 * 2.0 / (n as f64).sqrt();
        assert!((mean - 2.0).abs() < tol, "mean {mean} outside 2 +- {tol}");
    }

    #[test]
    fn forward_shapes_are_structural() {
        let model = tiny_model(1);
        let snap = snapshot(vec![0.5, 0.0, -0.5], vec![1.0, 0.0, 1.0]);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let fwd = model.forward(&snap, &mut rng, 3).unwrap();
        assert_eq!(fwd.q_z.dim(), 2);
        assert_eq!(fwd.p_z.dim(), 2);
        assert_eq!(fwd.samples.len(), 3);
        for s in &fwd.samples {
            assert_eq!(s.z.len(), 2);
            assert_eq!(s.q_y.dim(), 3);
            assert_eq!(s.p_y.dim(), 3);
            assert_eq!(s.sens.dim(), 3);
            assert_eq!(s.y.len(), 3);
        }
    }

    #[test]
    fn forward_fixed_seed_is_bitwise_identical() {
        let model = tiny_model(7);
        let snap = snapshot(vec![0.1, -0.2, 0.3], vec![1.0, 1.0, 1.0]);
        let run = || {
            let mut rng = ChaCha20Rng::seed_from_u64(99);
            model.forward(&snap, &mut rng, 2).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.q_z, b.q_z);
        assert_eq!(a.p_z, b.p_z);
        for (sa, sb) in a.samples.iter().zip(b.samples.iter()) {
            assert_eq!(sa.z, sb.z);
            assert_eq!(sa.q_y, sb.q_y);
            assert_eq!(sa.p_y, sb.p_y);
            assert_eq!(sa.sens, sb.sens);
            assert_eq!(sa.y, sb.y);
        }
    }

    /// With all-zero weights every head's mean equals its bias vector.
    #[test]
    fn zero_weight_model_emits_biases() {
        let mut model = tiny_model(3);
        let n = model.param_count(TrainScope::All);
        model.set_flat_params(TrainScope::All, &vec![0.0; n]);
        let snap = snapshot(vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0]);
        let fwd = model
            .forward_with_noise(&snap, &DrawnNoise::zeros(1, 2, 3))
            .unwrap();
        assert_eq!(fwd.q_z.mean(), &[0.0, 0.0]);
        assert_eq!(fwd.samples[0].q_y.mean(), &[0.0, 0.0, 0.0]);
        assert_eq!(fwd.samples[0].sens.mean(), &[0.0, 0.0, 0.0]);
    }

    /// Zero-fill invariance: a masked channel's pre-fill raw value changes
    /// nothing downstream because the snapshot constructor refuses leakage
    /// and the zero-filled input is identical either way.
    #[test]
    fn masked_channel_is_inert() {
        let model = tiny_model(11);
        // Two "raw" rows differing only in a masked channel.
        let scaler = Scaler::identity(3);
        let row_a = vec![Some(0.4), None, Some(-0.1)];
        let row_b = vec![Some(0.4), Some(555.0), Some(-0.1)];
        let (xa, ma) = scaler.standardize_row(&row_a);
        let (mut xb, mut mb) = scaler.standardize_row(&row_b);
        // Force the same mask on row_b (the ablation path does exactly this).
        xb[1] = 0.0;
        mb[1] = 0.0;
        let snap_a = SensorSnapshot::new(xa, ma, HourStamp(0)).unwrap();
        let snap_b = SensorSnapshot::new(xb, mb, HourStamp(0)).unwrap();
        assert_eq!(snap_a, snap_b);
        let noise = DrawnNoise::zeros(1, 2, 3);
        let fa = model.forward_with_noise(&snap_a, &noise).unwrap();
        let fb = model.forward_with_noise(&snap_b, &noise).unwrap();
        assert_eq!(fa.q_z, fb.q_z);
        assert_eq!(fa.samples[0].q_y, fb.samples[0].q_y);
    }
}
