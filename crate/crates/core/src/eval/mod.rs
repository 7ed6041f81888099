//! Metrics and experiment drivers.
//!
//! [`EvalReport`] collects the per-location numbers: MAE of the raw channel
//! mean (the uncorrected baseline), MAE of the method under test, a hit-rate
//! curve over error thresholds, a 48-hour autocorrelation profile, and
//! optional seed statistics. The ablation drivers cover channel dropout
//! (forced NA per row), training on sensor subsets, and loss-weight sweeps.
//! Everything is a pure function of its inputs and seeds.

mod ablation;
mod metrics;
mod report;

pub use ablation::{
    run_loss_weight_sweep, run_na_injection, run_sensor_subset, SweepEntry, TrainDriver,
    WeightScales,
};
pub use metrics::{
    autocorrelation, block_average, default_epsilon_grid, hit_rate_curve, histogram, mae, BinRule,
    HistBin,
};
pub use report::{seed_repeat, EvalReport, SeedStats, AUTOCORR_LAGS, DEFAULT_SEEDS, RECOVERY_FACTOR};

use crate::model::{infer, CorrectedReading, ModelError, SensorSnapshot, TrainError, VeliModel};
use crate::pipeline::{DataError, LocationDataset};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("series lengths differ: prediction {pred}, reference {reference}")]
    LengthMismatch { pred: usize, reference: usize },
    #[error("no hour where both series are observed")]
    NoCoObserved,
    #[error("series is constant; autocorrelation is undefined")]
    ConstantSeries,
    #[error("location has no reference series")]
    MissingReference,
    #[error("cannot force {n} NA channels on {d}-sensor rows (need n < d)")]
    NaCountOutOfRange { n: usize, d: usize },
    #[error("beta_y = 0 is rejected: the loss diverges without the observation prior")]
    BetaYZero,
    #[error("invalid weight scales: {0}")]
    BadScale(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Runs inference over every row of a location and returns the fused series
/// together with the per-row corrected readings.
pub fn correct_location(
    model: &VeliModel,
    location: &LocationDataset,
) -> Result<(Vec<Option<f64>>, Vec<CorrectedReading>), EvalError> {
    let mut fused = Vec::with_capacity(location.hours);
    let mut readings = Vec::with_capacity(location.hours);
    for t in 0..location.hours {
        let row = location.row(t);
        let (x, mask) = model.scaler.standardize_row(&row);
        let snap = SensorSnapshot::new(
            x,
            mask,
            crate::pipeline::HourStamp(location.start_hour.0 + t as i64),
        )?;
        let reading = infer(model, &snap)?;
        fused.push(Some(reading.fused_observed(snap.mask())));
        readings.push(reading);
    }
    Ok((fused, readings))
}
