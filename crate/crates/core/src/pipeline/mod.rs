//! Ingestion and preprocessing for sensor fleets.
//!
//! Raw device streams arrive at arbitrary frequency with gaps and garbage.
//! The pipeline turns them into model-ready hourly matrices in fixed stages:
//!
//! 1. [`resample_hourly`] — hourly averages on a gap-free grid (gaps are NA).
//! 2. [`range_validate`] — physically implausible values become NA.
//! 3. [`dbscan_scrub`] — density-based outlier detection on two-month
//!    batches; long abnormal excursions become NA.
//! 4. [`build_location`] — aligns sensors (and optional reference stations)
//!    on a shared hourly grid; multiple references are averaged per hour.
//! 5. [`eligibility_filter`] — drops sensors with too few observed hours.
//! 6. [`Scaler`] — per-channel z-scores fitted on training rows; masked
//!    entries are zero-filled after the transform.
//!
//! Stages never invent a value where the mask is 0 (the one exception being
//! the scaler's explicit zero-fill) and may only turn observed values into
//! NA, never the reverse.

mod csvio;
mod dbscan;
mod hour;
mod location;
mod resample;
mod standardize;
mod validate;

pub use csvio::{read_location_csv, read_raw_series_csv, write_location_csv, CorrectedColumns};
pub use dbscan::{dbscan_1d, dbscan_scrub, DbscanParams, EpsRule, MinPtsRule, DBSCAN_BATCH_HOURS};
pub use hour::HourStamp;
pub use location::{build_location, eligibility_filter, split_train_rows, DEFAULT_MIN_HOURS};
pub use resample::resample_hourly;
pub use standardize::Scaler;
pub use validate::{range_validate, MeasurementKind, RangeBounds};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot parse timestamp {value:?}: {reason}")]
    Timestamp { value: String, reason: String },
    #[error("timestamps must be strictly increasing (sample {index})")]
    NonMonotonicTimestamps { index: usize },
    #[error("location must contain at least one sensor series")]
    EmptyLocation,
    #[error(
        "too few eligible sensors: {remaining} remain (need >= {required}); observed hours per sensor: {counts:?}"
    )]
    UnderPopulated {
        remaining: usize,
        required: usize,
        counts: Vec<(String, usize)>,
    },
    #[error("channel {channel} has {count} observed values; need at least 2 to fit statistics")]
    InsufficientObserved { channel: usize, count: usize },
    #[error("duplicate hour {hour} in input")]
    DuplicateHour { hour: HourStamp },
    #[error("row {row}: expected {expected} fields, got {actual}")]
    RowShape {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("cannot parse value {value:?} at row {row}, column {column}")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("missing or empty header; expected `timestamp,s1,...,sd[,ref]`")]
    BadHeader,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One sensor's stream at device frequency; `None` marks an NA sample.
#[derive(Debug, Clone)]
pub struct RawSeries {
    pub sensor_id: String,
    samples: Vec<(i64, Option<f64>)>,
}

impl RawSeries {
    /// `samples` are (Unix seconds, value) pairs; timestamps must be strictly
    /// increasing.
    pub fn new(
        sensor_id: impl Into<String>,
        samples: Vec<(i64, Option<f64>)>,
    ) -> Result<Self, DataError> {
        for (i, pair) in samples.windows(2).enumerate() {
            if pair[1].0 <= pair[0].0 {
                return Err(DataError::NonMonotonicTimestamps { index: i + 1 });
            }
        }
        Ok(Self {
            sensor_id: sensor_id.into(),
            samples,
        })
    }

    pub fn samples(&self) -> &[(i64, Option<f64>)] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One sensor on a fixed hourly grid; gaps are `None` slots, never missing
/// entries.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlySeries {
    pub sensor_id: String,
    pub start_hour: HourStamp,
    pub values: Vec<Option<f64>>,
}

impl HourlySeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn hour_at(&self, index: usize) -> HourStamp {
        HourStamp(self.start_hour.0 + index as i64)
    }

    pub fn observed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Aligned sensors for one site, with an optional reference series.
///
/// The observation mask is implicit: `psi(t, i) = 1` iff sensor `i` has a
/// value at row `t`.
#[derive(Debug, Clone)]
pub struct LocationDataset {
    pub sensors: Vec<HourlySeries>,
    pub reference: Option<HourlySeries>,
    pub start_hour: HourStamp,
    pub hours: usize,
}

impl LocationDataset {
    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    /// Row `t` as per-sensor optional values.
    pub fn row(&self, t: usize) -> Vec<Option<f64>> {
        self.sensors.iter().map(|s| s.values[t]).collect()
    }

    /// All rows, hours x sensors.
    pub fn rows(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.hours).map(|t| self.row(t)).collect()
    }

    /// Observation mask for row `t` (1.0 observed, 0.0 missing).
    pub fn mask_row(&self, t: usize) -> Vec<f64> {
        self.sensors
            .iter()
            .map(|s| if s.values[t].is_some() { 1.0 } else { 0.0 })
            .collect()
    }

    /// Keeps only the first `s` sensors.
    pub fn take_sensors(&self, s: usize) -> LocationDataset {
        assert!(s >= 1 && s <= self.sensors.len());
        LocationDataset {
            sensors: self.sensors[..s].to_vec(),
            reference: self.reference.clone(),
            start_hour: self.start_hour,
            hours: self.hours,
        }
    }

    /// Per-row mean of observed sensor values (the raw-LCS baseline series).
    pub fn raw_channel_mean(&self) -> Vec<Option<f64>> {
        (0..self.hours)
            .map(|t| {
                let mut acc = 0.0;
                let mut n = 0usize;
                for s in &self.sensors {
                    if let Some(v) = s.values[t] {
                        acc += v;
                        n += 1;
                    }
                }
                if n == 0 {
                    None
                } else {
                    Some(acc / n as f64)
                }
            })
            .collect()
    }
}
