//! Density-based outlier scrubbing on two-month batches.
//!
//! Each batch runs 1-D DBSCAN over its observed values; points labeled noise
//! become NA, clustered points are untouched. The default parameters are
//! scale-adaptive: `eps` is a multiple of the batch's median absolute
//! deviation, and the core threshold is a fraction of the batch's observed
//! count so that an isolated failure mode (a long plateau far from the bulk
//! of readings) cannot qualify as a cluster no matter how steady it is.

use super::{HourlySeries};
use serde::{Deserialize, Serialize};

/// Hours per scrub batch (about two months); the last partial batch is
/// processed as-is.
pub const DBSCAN_BATCH_HOURS: usize = 1460;

/// Neighborhood radius rule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsRule {
    Fixed(f64),
    /// `eps = multiple x MAD(batch values)`.
    MadMultiple(f64),
}

/// Core-point support rule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinPtsRule {
    Absolute(usize),
    /// `min_pts = max(floor, ceil(fraction x observed))`.
    Fraction { fraction: f64, floor: usize },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: EpsRule,
    pub min_pts: MinPtsRule,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps: EpsRule::MadMultiple(5.0),
            min_pts: MinPtsRule::Fraction {
                fraction: 0.2,
                floor: 24,
            },
        }
    }
}

/// 1-D DBSCAN noise labels (`true` = noise) with Euclidean distance on the
/// line. Neighborhoods are closed balls and include the point itself.
pub fn dbscan_1d(values: &[f64], eps: f64, min_pts: usize) -> Vec<bool> {
    assert!(eps >= 0.0, "eps must be non-negative");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();

    // Neighbor counts via two pointers over the sorted line.
    let mut core = vec![false; n];
    let mut lo = 0usize;
    let mut hi = 0usize;
    for i in 0..n {
        while sorted[i] - sorted[lo] > eps {
            lo += 1;
        }
        if hi < i {
            hi = i;
        }
        while hi + 1 < n && sorted[hi + 1] - sorted[i] <= eps {
            hi += 1;
        }
        core[i] = hi - lo + 1 >= min_pts;
    }

    // A point is in a cluster iff it is core or within eps of a core point;
    // on the line that is a sweep for the nearest core on each side.
    let mut in_cluster = vec![false; n];
    let mut last_core: Option<f64> = None;
    for i in 0..n {
        if core[i] {
            last_core = Some(sorted[i]);
        }
        if core[i] || last_core.map_or(false, |c| sorted[i] - c <= eps) {
            in_cluster[i] = true;
        }
    }
    let mut next_core: Option<f64> = None;
    for i in (0..n).rev() {
        if core[i] {
            next_core = Some(sorted[i]);
        }
        if next_core.map_or(false, |c| c - sorted[i] <= eps) {
            in_cluster[i] = true;
        }
    }

    let mut noise = vec![false; n];
    for (pos, &idx) in order.iter().enumerate() {
        noise[idx] = !in_cluster[pos];
    }
    noise
}

/// Median absolute deviation from the median.
fn mad(values: &[f64]) -> f64 {
    let med = median(values);
    let devs: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    median(&devs)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scrubs a series batch by batch. Within each batch the observed values run
/// through [`dbscan_1d`]; noise points become NA. A batch with fewer observed
/// values than its resolved `min_pts` is left unchanged.
pub fn dbscan_scrub(
    series: &HourlySeries,
    params: DbscanParams,
    batch_len: usize,
) -> HourlySeries {
    assert!(batch_len >= 1, "batch length must be positive");
    let mut values = series.values.clone();
    for chunk_start in (0..values.len()).step_by(batch_len) {
        let chunk_end = (chunk_start + batch_len).min(values.len());
        let observed: Vec<(usize, f64)> = (chunk_start..chunk_end)
            .filter_map(|i| values[i].map(|v| (i, v)))
            .collect();
        if observed.is_empty() {
            continue;
        }
        let vals: Vec<f64> = observed.iter().map(|&(_, v)| v).collect();
        let min_pts = match params.min_pts {
            MinPtsRule::Absolute(m) => m,
            MinPtsRule::Fraction { fraction, floor } => {
                ((fraction * vals.len() as f64).ceil() as usize).max(floor)
            }
        };
        if vals.len() < min_pts {
            continue;
        }
        let eps = match params.eps {
            EpsRule::Fixed(e) => e,
            EpsRule::MadMultiple(k) => k * mad(&vals),
        };
        let noise = dbscan_1d(&vals, eps, min_pts);
        for (&(idx, _), &is_noise) in observed.iter().zip(noise.iter()) {
            if is_noise {
                values[idx] = None;
            }
        }
    }
    HourlySeries {
        sensor_id: series.sensor_id.clone(),
        start_hour: series.start_hour,
        values,
    }
}
