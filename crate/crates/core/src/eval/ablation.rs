//! Ablation drivers: NA injection, sensor subsets, and loss-weight sweeps.

use super::report::EvalReport;
use super::{correct_location, EvalError};
use crate::model::{
    infer, train, LossWeights, SensorSnapshot, TrainConfig, VeliConfig, VeliModel,
};
use crate::pipeline::{LocationDataset, Scaler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Everything needed to train a fresh model on a location. Ablations that
/// retrain (sensor subsets, weight sweeps) reuse one driver so every grid
/// point differs only in the intended knob.
#[derive(Debug, Clone)]
pub struct TrainDriver {
    pub latent: usize,
    pub hidden: usize,
    pub k_samples: usize,
    pub weights: LossWeights,
    pub train: TrainConfig,
    /// Training rows must have at least this many observed channels
    /// (at minimum one; fully masked rows never train).
    pub min_observed: usize,
}

impl TrainDriver {
    pub fn new(train: TrainConfig) -> Self {
        Self {
            latent: 4,
            hidden: 32,
            k_samples: 1,
            weights: LossWeights::default(),
            train,
            min_observed: 1,
        }
    }

    /// Fits a scaler on the location, builds admissible snapshots, trains a
    /// fresh model seeded from the train config.
    pub fn train_on(&self, location: &LocationDataset) -> Result<VeliModel, EvalError> {
        let d = location.sensor_count();
        let rows = location.rows();
        let scaler = Scaler::fit(&rows, d)?;
        let snapshots = self.snapshots(&scaler, location);
        let mut config = VeliConfig::new(d);
        config.latent = self.latent.min(d);
        config.hidden = self.hidden;
        config.k_samples = self.k_samples;
        config.weights = self.weights;
        let mut model = VeliModel::new(config, scaler, self.train.seed)?;
        train(&mut model, &snapshots, &self.train)?;
        Ok(model)
    }

    fn snapshots(&self, scaler: &Scaler, location: &LocationDataset) -> Vec<SensorSnapshot> {
        let threshold = self.min_observed.max(1);
        location
            .rows()
            .iter()
            .enumerate()
            .filter_map(|(t, row)| {
                let observed = row.iter().filter(|v| v.is_some()).count();
                if observed < threshold {
                    return None;
                }
                let (x, mask) = scaler.standardize_row(row);
                SensorSnapshot::new(
                    x,
                    mask,
                    crate::pipeline::HourStamp(location.start_hour.0 + t as i64),
                )
                .ok()
            })
            .collect()
    }
}

/// Channel-dropout ablation: every hourly row has exactly `n` randomly chosen
/// channels forced to NA before inference. `n = 0` degenerates to the plain
/// evaluation.
pub fn run_na_injection(
    model: &VeliModel,
    location: &LocationDataset,
    n: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let d = location.sensor_count();
    if n >= d {
        return Err(EvalError::NaCountOutOfRange { n, d });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut fused: Vec<Option<f64>> = Vec::with_capacity(location.hours);
    for t in 0..location.hours {
        let row = location.row(t);
        let (x, mask) = model.scaler.standardize_row(&row);
        let snap = SensorSnapshot::new(x, mask, crate::pipeline::HourStamp(0))
            .expect("standardized rows are valid snapshots");
        // Exactly n distinct channels, uniformly, regardless of current mask.
        let mut channels: Vec<usize> = (0..d).collect();
        for i in 0..n {
            let j = rng.gen_range(i..d);
            channels.swap(i, j);
        }
        channels.truncate(n);
        let masked = snap.with_channels_masked(&channels);
        let reading = infer(model, &masked)?;
        fused.push(Some(reading.fused_observed(masked.mask())));
    }
    EvalReport::build(format!("na_injection_n{n}"), location, &fused)
}

/// Minimum-viable-sensors ablation: for each size `s`, keep the first `s`
/// channels, train a fresh model on rows with at least `floor(s/2)` observed
/// channels, and evaluate the fused output on the full span.
pub fn run_sensor_subset(
    location: &LocationDataset,
    sizes: &[usize],
    driver: &TrainDriver,
) -> Result<Vec<(usize, EvalReport)>, EvalError> {
    let mut out = Vec::with_capacity(sizes.len());
    for &s in sizes {
        assert!(
            s >= 1 && s <= location.sensor_count(),
            "subset size {s} out of range"
        );
        let subset = location.take_sensors(s);
        let mut sub_driver = driver.clone();
        sub_driver.min_observed = (s / 2).max(1);
        let model = sub_driver.train_on(&subset)?;
        let (fused, _) = correct_location(&model, &subset)?;
        let report = EvalReport::build(format!("subset_s{s}"), &subset, &fused)?;
        out.push((s, report));
    }
    Ok(out)
}

/// One grid point of the loss-weight sweep, as multipliers on the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightScales {
    pub alpha: f64,
    pub beta_z: f64,
    pub beta_y: f64,
}

impl WeightScales {
    pub fn uniform(scale: f64) -> Self {
        Self {
            alpha: scale,
            beta_z: scale,
            beta_y: scale,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub scales: WeightScales,
    pub mae: f64,
}

/// Retrains at every grid point with the default weights scaled per entry.
/// A requested `beta_y` of zero is rejected before any training: it removes
/// the regularizer that keeps the observation posterior anchored and the
/// loss diverges.
pub fn run_loss_weight_sweep(
    location: &LocationDataset,
    grid: &[WeightScales],
    driver: &TrainDriver,
) -> Result<Vec<SweepEntry>, EvalError> {
    for scales in grid {
        if driver.weights.beta_y * scales.beta_y == 0.0 {
            return Err(EvalError::BetaYZero);
        }
        if scales.alpha <= 0.0 || scales.beta_z <= 0.0 || scales.beta_y < 0.0 {
            return Err(EvalError::BadScale(format!("{scales:?}")));
        }
    }
    let mut out = Vec::with_capacity(grid.len());
    for &scales in grid {
        let mut point = driver.clone();
        point.weights = LossWeights {
            alpha: driver.weights.alpha * scales.alpha,
            beta_z: driver.weights.beta_z * scales.beta_z,
            beta_y: driver.weights.beta_y * scales.beta_y,
        };
        let model = point.train_on(location)?;
        let (fused, _) = correct_location(&model, location)?;
        let report = EvalReport::build("sweep", location, &fused)?;
        out.push(SweepEntry {
            scales,
            mae: report.mae_method,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_base, inject_noise, BaseSignal, BaseSignalSpec, NoiseConfig};

    fn small_location(hours: usize, seed: u64) -> LocationDataset {
        let base = gen_base(
            &BaseSignalSpec {
                signal: BaseSignal::sinusoid_default(),
                length: hours,
            },
            seed,
        )
        .unwrap();
        let noisy = inject_noise(&base, &NoiseConfig::fig9(), 10, seed).unwrap();
        noisy.to_location(crate::pipeline::HourStamp(0))
    }

    fn fast_driver(seed: u64) -> TrainDriver {
        let mut driver = TrainDriver::new(TrainConfig {
            epochs: 2,
            batch_size: 32,
            learning_rate: 1e-3,
            seed,
        });
        driver.hidden = 8;
        driver
    }

    #[test]
    fn na_injection_rejects_n_at_or_above_d() {
        let loc = small_location(120, 1);
        let model = fast_driver(1).train_on(&loc).unwrap();
        assert!(matches!(
            run_na_injection(&model, &loc, 10, 0),
            Err(EvalError::NaCountOutOfRange { n: 10, d: 10 })
        ));
    }

    #[test]
    fn na_injection_zero_matches_plain_evaluation() {
        let loc = small_location(120, 2);
        let model = fast_driver(2).train_on(&loc).unwrap();
        let report = run_na_injection(&model, &loc, 0, 0).unwrap();
        let (fused, _) = correct_location(&model, &loc).unwrap();
        let plain = EvalReport::build("plain", &loc, &fused).unwrap();
        assert_eq!(report.mae_method, plain.mae_method);
    }

    #[test]
    fn na_injection_masks_exactly_n_channels_per_row() {
        // Structural check through the masking helper itself.
        let loc = small_location(50, 3);
        let model = fast_driver(3).train_on(&loc).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let d = loc.sensor_count();
        for t in 0..loc.hours {
            let row = loc.row(t);
            let (x, mask) = model.scaler.standardize_row(&row);
            let snap = SensorSnapshot::new(x, mask, crate::pipeline::HourStamp(0)).unwrap();
            let n = 4;
            let mut channels: Vec<usize> = (0..d).collect();
            for i in 0..n {
                let j = rng.gen_range(i..d);
                channels.swap(i, j);
            }
            channels.truncate(n);
            let masked = snap.with_channels_masked(&channels);
            let forced: usize = channels.len();
            assert_eq!(forced, n);
            for &c in &channels {
                assert_eq!(masked.mask()[c], 0.0);
                assert_eq!(masked.x()[c], 0.0);
            }
        }
    }

    #[test]
    fn subset_excludes_under_observed_rows_from_training() {
        let driver = fast_driver(4);
        let loc = small_location(80, 4);
        let subset = loc.take_sensors(4);
        // Threshold floor(4/2) = 2: rows with fewer than 2 observed must not
        // train. Count admissible rows by hand and compare.
        let mut sub_driver = driver.clone();
        sub_driver.min_observed = 2;
        let scaler = Scaler::fit(&subset.rows(), 4).unwrap();
        let snaps = sub_driver.snapshots(&scaler, &subset);
        let expected = subset
            .rows()
            .iter()
            .filter(|row| row.iter().filter(|v| v.is_some()).count() >= 2)
            .count();
        assert_eq!(snaps.len(), expected);
    }

    #[test]
    fn beta_y_zero_is_rejected_before_training() {
        let loc = small_location(80, 5);
        let driver = fast_driver(5);
        let grid = [WeightScales {
            alpha: 1.0,
            beta_z: 1.0,
            beta_y: 0.0,
        }];
        assert!(matches!(
            run_loss_weight_sweep(&loc, &grid, &driver),
            Err(EvalError::BetaYZero)
        ));
    }

    #[test]
    fn unit_scales_reproduce_the_default_run_exactly() {
        let loc = small_location(100, 6);
        let driver = fast_driver(6);
        let sweep = run_loss_weight_sweep(&loc, &[WeightScales::uniform(1.0)], &driver).unwrap();
        let model = driver.train_on(&loc).unwrap();
        let (fused, _) = correct_location(&model, &loc).unwrap();
        let report = EvalReport::build("default", &loc, &fused).unwrap();
        assert_eq!(sweep[0].mae, report.mae_method);
    }
}
