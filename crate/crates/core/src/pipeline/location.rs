//! Location assembly, eligibility filtering, and train/test splitting.

use super::{DataError, HourStamp, HourlySeries, LocationDataset};

/// Minimum observed hours for a sensor to stay in a location (65% of a year).
pub const DEFAULT_MIN_HOURS: usize = 6000;

/// Aligns sensors and reference stations on the union hourly grid.
///
/// Missing slots become NA. Multiple references are averaged per hour,
/// ignoring NA; an hour where every reference is NA stays NA.
pub fn build_location(
    sensors: &[HourlySeries],
    refs: &[HourlySeries],
) -> Result<LocationDataset, DataError> {
    if sensors.is_empty() {
        return Err(DataError::EmptyLocation);
    }
    let nonempty = sensors.iter().chain(refs.iter()).filter(|s| !s.is_empty());
    let start = nonempty
        .clone()
        .map(|s| s.start_hour.0)
        .min()
        .unwrap_or(0);
    let end = nonempty
        .map(|s| s.start_hour.0 + s.len() as i64)
        .max()
        .unwrap_or(0);
    let hours = (end - start).max(0) as usize;
    let start_hour = HourStamp(start);

    let align = |s: &HourlySeries| -> HourlySeries {
        let mut values = vec![None; hours];
        let offset = s.start_hour.0 - start;
        for (i, v) in s.values.iter().enumerate() {
            values[(offset + i as i64) as usize] = *v;
        }
        HourlySeries {
            sensor_id: s.sensor_id.clone(),
            start_hour,
            values,
        }
    };

    let aligned: Vec<HourlySeries> = sensors.iter().map(align).collect();
    let reference = if refs.is_empty() {
        None
    } else {
        let aligned_refs: Vec<HourlySeries> = refs.iter().map(align).collect();
        let values = (0..hours)
            .map(|t| {
                let mut acc = 0.0;
                let mut n = 0usize;
                for r in &aligned_refs {
                    if let Some(v) = r.values[t] {
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
            .collect();
        Some(HourlySeries {
            sensor_id: "ref".into(),
            start_hour,
            values,
        })
    };

    Ok(LocationDataset {
        sensors: aligned,
        reference,
        start_hour,
        hours,
    })
}

/// Drops sensors with fewer than `min_hours` observed values (the boundary
/// itself is kept) and errors with per-sensor counts if fewer than
/// `min_sensors` remain.
pub fn eligibility_filter(
    location: &LocationDataset,
    min_hours: usize,
    min_sensors: usize,
) -> Result<LocationDataset, DataError> {
    let surviving: Vec<HourlySeries> = location
        .sensors
        .iter()
        .filter(|s| s.observed_count() >= min_hours)
        .cloned()
        .collect();
    if surviving.len() < min_sensors {
        return Err(DataError::UnderPopulated {
            remaining: surviving.len(),
            required: min_sensors,
            counts: location
                .sensors
                .iter()
                .map(|s| (s.sensor_id.clone(), s.observed_count()))
                .collect(),
        });
    }
    Ok(LocationDataset {
        sensors: surviving,
        reference: location.reference.clone(),
        start_hour: location.start_hour,
        hours: location.hours,
    })
}

/// Chronological split: the first `train_fraction` of rows train, the rest
/// test. Returns (train row indices, test row indices).
pub fn split_train_rows(hours: usize, train_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    assert!(
        (0.0..=1.0).contains(&train_fraction),
        "train fraction must be in [0,1]"
    );
    let cut = (hours as f64 * train_fraction).round() as usize;
    ((0..cut).collect(), (cut..hours).collect())
}
