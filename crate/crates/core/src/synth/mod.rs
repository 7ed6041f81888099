//! Synthetic data streams: base signals plus compositional noise.
//!
//! A ground-truth base signal (sinusoid, sawtooth, exponential draws, or a
//! clean reference file) is replicated across ten channels and corrupted
//! point by point with four independent noise types: additive Gaussian,
//! multiplicative, spike (a large multiplicative factor), and NA dropout.
//! Value noise applies in a fixed order — Gaussian add, then multiplicative,
//! then spike — and NA replacement comes last, capped per row.
//!
//! Randomness is split into streams of one master seed: stream 0 drives the
//! row-level NA selection, stream `c+1` drives channel `c`'s value noise, so
//! channels are independently noisy yet the whole location regenerates
//! bitwise from `(spec, config, seed)`.

use crate::pipeline::{HourStamp, HourlySeries, LocationDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("base signal spec is invalid: {0}")]
    BadSpec(String),
    #[error("noise config is invalid: {0}")]
    BadNoise(String),
    #[error("reference_file base requires a provided clean series")]
    MissingReference,
}

/// Base signal families.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BaseSignal {
    /// Pass-through of a provided clean series.
    ReferenceFile { values: Vec<f64> },
    /// `offset + (max - offset) * (1 + sin(2 pi t / period)) / 2`.
    Sinusoid {
        offset: f64,
        max_value: f64,
        period_hours: f64,
    },
    /// `offset + (max - offset) * (t mod period) / period`.
    Sawtooth {
        offset: f64,
        max_value: f64,
        period_hours: f64,
    },
    /// I.i.d. draws from Exp(rate); mean 1/rate.
    Exponential { rate: f64 },
}

impl BaseSignal {
    pub fn sinusoid_default() -> Self {
        BaseSignal::Sinusoid {
            offset: 2.0,
            max_value: 30.0,
            period_hours: 48.0,
        }
    }

    pub fn sawtooth_default() -> Self {
        BaseSignal::Sawtooth {
            offset: 2.0,
            max_value: 30.0,
            period_hours: 48.0,
        }
    }

    pub fn exponential_default() -> Self {
        BaseSignal::Exponential { rate: 1.0 / 12.0 }
    }

    fn validate(&self) -> Result<(), SynthError> {
        match self {
            BaseSignal::ReferenceFile { values } => {
                if values.is_empty() {
                    return Err(SynthError::MissingReference);
                }
            }
            BaseSignal::Sinusoid {
                offset,
                max_value,
                period_hours,
            }
            | BaseSignal::Sawtooth {
                offset,
                max_value,
                period_hours,
            } => {
                if max_value <= offset {
                    return Err(SynthError::BadSpec(format!(
                        "max_value {max_value} must exceed offset {offset}"
                    )));
                }
                if *period_hours <= 0.0 {
                    return Err(SynthError::BadSpec("period must be positive".into()));
                }
            }
            BaseSignal::Exponential { rate } => {
                if *rate <= 0.0 {
                    return Err(SynthError::BadSpec("rate must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Base signal specification: family plus length in hours.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseSignalSpec {
    pub signal: BaseSignal,
    pub length: usize,
}

/// Generates the ground-truth base series. The exponential family draws from
/// stream `u64::MAX` of the seed so channel noise streams stay untouched.
pub fn gen_base(spec: &BaseSignalSpec, seed: u64) -> Result<Vec<f64>, SynthError> {
    spec.signal.validate()?;
    let t_range = 0..spec.length;
    Ok(match &spec.signal {
        BaseSignal::ReferenceFile { values } => {
            if values.len() < spec.length {
                return Err(SynthError::BadSpec(format!(
                    "reference series has {} hours, need {}",
                    values.len(),
                    spec.length
                )));
            }
            values[..spec.length].to_vec()
        }
        BaseSignal::Sinusoid {
            offset,
            max_value,
            period_hours,
        } => t_range
            .map(|t| {
                let phase = 2.0 * std::f64::consts::PI * t as f64 / period_hours;
                offset + (max_value - offset) * (1.0 + phase.sin()) / 2.0
            })
            .collect(),
        BaseSignal::Sawtooth {
            offset,
            max_value,
            period_hours,
        } => t_range
            .map(|t| {
                let frac = (t as f64 % period_hours) / period_hours;
                offset + (max_value - offset) * frac
            })
            .collect(),
        BaseSignal::Exponential { rate } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(u64::MAX);
            let exp = Exp::new(*rate).expect("validated rate");
            t_range.map(|_| rng.sample(exp)).collect()
        }
    })
}

/// Per-point noise process parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub gaussian_mu: f64,
    pub gaussian_sigma: f64,
    pub p_gaussian: f64,
    pub factor: f64,
    pub p_factor: f64,
    pub spike_factor: f64,
    pub p_spike: f64,
    pub p_na: f64,
    pub max_na_per_row: usize,
}

impl NoiseConfig {
    /// The moderate preset: noise similar to real fleet behavior.
    pub fn fig9() -> Self {
        Self {
            gaussian_mu: 3.0,
            gaussian_sigma: 2.0,
            p_gaussian: 1.0,
            factor: 1.5,
            p_factor: 0.5,
            spike_factor: 10.0,
            p_spike: 0.1,
            p_na: 0.35,
            max_na_per_row: 5,
        }
    }

    /// The extreme preset: distortion beyond recovery.
    pub fn fig10() -> Self {
        Self {
            gaussian_mu: 5.0,
            gaussian_sigma: 2.0,
            p_gaussian: 1.0,
            factor: 2.0,
            p_factor: 0.7,
            spike_factor: 10.0,
            p_spike: 0.4,
            p_na: 0.4,
            max_na_per_row: 5,
        }
    }

    /// No noise at all; channels replicate the base exactly.
    pub fn clean() -> Self {
        Self {
            gaussian_mu: 0.0,
            gaussian_sigma: 0.0,
            p_gaussian: 0.0,
            factor: 1.0,
            p_factor: 0.0,
            spike_factor: 1.0,
            p_spike: 0.0,
            p_na: 0.0,
            max_na_per_row: 0,
        }
    }

    pub fn validate(&self, channels: usize) -> Result<(), SynthError> {
        for (name, p) in [
            ("p_gaussian", self.p_gaussian),
            ("p_factor", self.p_factor),
            ("p_spike", self.p_spike),
            ("p_na", self.p_na),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::BadNoise(format!("{name} = {p} not in [0,1]")));
            }
        }
        if self.gaussian_sigma < 0.0 {
            return Err(SynthError::BadNoise("gaussian_sigma must be >= 0".into()));
        }
        if self.max_na_per_row > channels {
            return Err(SynthError::BadNoise(format!(
                "max_na_per_row {} exceeds channel count {channels}",
                self.max_na_per_row
            )));
        }
        Ok(())
    }
}

/// A generated location: ground truth plus noisy channels.
#[derive(Debug, Clone)]
pub struct SyntheticLocation {
    pub base: Vec<f64>,
    /// `channels[c][t]`; `None` is an NA reading.
    pub channels: Vec<Vec<Option<f64>>>,
    pub seed: u64,
}

impl SyntheticLocation {
    /// Converts to the standard location layout with the base signal as the
    /// reference series.
    pub fn to_location(&self, start_hour: HourStamp) -> LocationDataset {
        let hours = self.base.len();
        let sensors = self
            .channels
            .iter()
            .enumerate()
            .map(|(c, values)| HourlySeries {
                sensor_id: format!("s{}", c + 1),
                start_hour,
                values: values.clone(),
            })
            .collect();
        let reference = Some(HourlySeries {
            sensor_id: "ref".into(),
            start_hour,
            values: self.base.iter().map(|&v| Some(v)).collect(),
        });
        LocationDataset {
            sensors,
            reference,
            start_hour,
            hours,
        }
    }
}

/// Applies the noise process to `channels` copies of the base signal.
///
/// Per channel and time step, independently: with `p_gaussian` add
/// `N(mu, sigma^2)`; with `p_factor` multiply by `factor`; with `p_spike`
/// multiply by `spike_factor`. NA replacement runs last: each channel is
/// selected with `p_na`, and when a row selects more than `max_na_per_row`
/// channels, a uniform subset of that size is kept.
pub fn inject_noise(
    base: &[f64],
    config: &NoiseConfig,
    channels: usize,
    seed: u64,
) -> Result<SyntheticLocation, SynthError> {
    config.validate(channels)?;
    assert!(channels >= 1, "need at least one channel");
    let hours = base.len();

    let mut values: Vec<Vec<Option<f64>>> = Vec::with_capacity(channels);
    for c in 0..channels {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(c as u64 + 1);
        let gauss = if config.gaussian_sigma > 0.0 {
            Some(Normal::new(config.gaussian_mu, config.gaussian_sigma).expect("validated sigma"))
        } else {
            None
        };
        let mut channel = Vec::with_capacity(hours);
        for &b in base {
            let mut v = b;
            if config.p_gaussian > 0.0 && rng.gen_bool(config.p_gaussian) {
                v += match gauss {
                    Some(n) => rng.sample(n),
                    None => config.gaussian_mu,
                };
            }
            if config.p_factor > 0.0 && rng.gen_bool(config.p_factor) {
                v *= config.factor;
            }
            if config.p_spike > 0.0 && rng.gen_bool(config.p_spike) {
                v *= config.spike_factor;
            }
            channel.push(Some(v));
        }
        values.push(channel);
    }

    // Row-level NA pass on stream 0.
    let mut na_rng = ChaCha20Rng::seed_from_u64(seed);
    na_rng.set_stream(0);
    for t in 0..hours {
        let mut selected: Vec<usize> = (0..channels)
            .filter(|_| config.p_na > 0.0 && na_rng.gen_bool(config.p_na))
            .collect();
        if selected.len() > config.max_na_per_row {
            // Uniform subset via partial Fisher-Yates.
            for i in 0..config.max_na_per_row {
                let j = na_rng.gen_range(i..selected.len());
                selected.swap(i, j);
            }
            selected.truncate(config.max_na_per_row);
        }
        for c in selected {
            values[c][t] = None;
        }
    }

    Ok(SyntheticLocation {
        base: base.to_vec(),
        channels: values,
        seed,
    })
}
