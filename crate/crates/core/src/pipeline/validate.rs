//! Hard physical-range validation.

use super::HourlySeries;
use serde::{Deserialize, Serialize};

/// Closed-interval bounds; values outside become NA.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RangeBounds {
    pub lo: f64,
    pub hi: f64,
}

impl RangeBounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo.is_finite() && hi.is_finite() && lo < hi, "need finite lo < hi");
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Measurement kinds with their default hard bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    /// PM2.5 in ug/m3; bound chosen above any plausible ambient reading.
    Pm25,
    /// Outdoor temperature in degrees Celsius.
    TemperatureC,
}

impl MeasurementKind {
    pub fn default_bounds(self) -> RangeBounds {
        match self {
            MeasurementKind::Pm25 => RangeBounds::new(0.0, 1000.0),
            MeasurementKind::TemperatureC => RangeBounds::new(-50.0, 70.0),
        }
    }
}

/// Replaces out-of-range (or non-finite) values with NA. Bounds are closed:
/// a value exactly at a bound is kept.
pub fn range_validate(series: &HourlySeries, bounds: RangeBounds) -> HourlySeries {
    HourlySeries {
        sensor_id: series.sensor_id.clone(),
        start_hour: series.start_hour,
        values: series
            .values
            .iter()
            .map(|v| v.filter(|&x| x.is_finite() && bounds.contains(x)))
            .collect(),
    }
}
