//! Per-channel z-score standardization.

use super::DataError;
use serde::{Deserialize, Serialize};

const STD_FLOOR: f64 = 1e-6;

/// Per-channel mean/std fitted on observed training entries. Stored in model
/// checkpoints so inference can map outputs back to physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    /// Fits on the observed entries of `rows` (hours x channels). Every
    /// channel needs at least two observed values; stds below the floor are
    /// clamped to it so constant channels transform to exactly zero.
    pub fn fit(rows: &[Vec<Option<f64>>], channels: usize) -> Result<Self, DataError> {
        let mut means = vec![0.0; channels];
        let mut stds = vec![0.0; channels];
        for ch in 0..channels {
            let observed: Vec<f64> = rows.iter().filter_map(|r| r[ch]).collect();
            if observed.len() < 2 {
                return Err(DataError::InsufficientObserved {
                    channel: ch,
                    count: observed.len(),
                });
            }
            let n = observed.len() as f64;
            let mean = observed.iter().sum::<f64>() / n;
            let var = observed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            means[ch] = mean;
            stds[ch] = var.sqrt().max(STD_FLOOR);
        }
        Ok(Self { means, stds })
    }

    /// Identity scaler (mean 0, std 1 per channel), for data already in
    /// model units.
    pub fn identity(channels: usize) -> Self {
        Self {
            means: vec![0.0; channels],
            stds: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.means.len()
    }

    /// Standardizes one row; masked entries are zero-filled and the returned
    /// mask carries the missingness signal.
    pub fn standardize_row(&self, row: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(row.len(), self.channels());
        let mut x = vec![0.0; row.len()];
        let mut mask = vec![0.0; row.len()];
        for (i, v) in row.iter().enumerate() {
            if let Some(v) = v {
                x[i] = (v - self.means[i]) / self.stds[i];
                mask[i] = 1.0;
            }
        }
        (x, mask)
    }

    /// Maps a standardized value of channel `ch` back to physical units.
    pub fn destandardize(&self, ch: usize, value: f64) -> f64 {
        value * self.stds[ch] + self.means[ch]
    }

    /// Maps a standardized spread (a standard deviation) of channel `ch`
    /// back to physical units; only the scale applies.
    pub fn destandardize_scale(&self, ch: usize, spread: f64) -> f64 {
        spread * self.stds[ch]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_channel_is_floored_and_transforms_to_zero() {
        let rows = vec![vec![Some(5.0)], vec![Some(5.0)], vec![Some(5.0)]];
        let scaler = Scaler::fit(&rows, 1).unwrap();
        assert_eq!(scaler.stds[0], STD_FLOOR);
        let (x, mask) = scaler.standardize_row(&[Some(5.0)]);
        assert_eq!(x, vec![0.0]);
        assert_eq!(mask, vec![1.0]);
    }

    #[test]
    fn round_trip_on_observed_entries() {
        let rows = vec![
            vec![Some(1.0), Some(100.0)],
            vec![Some(3.0), None],
            vec![Some(7.0), Some(250.0)],
        ];
        let scaler = Scaler::fit(&rows, 2).unwrap();
        for row in &rows {
            let (x, _mask) = scaler.standardize_row(row);
            for (ch, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    assert!((scaler.destandardize(ch, x[ch]) - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn masked_entries_zero_fill_with_zero_mask() {
        let rows = vec![vec![Some(1.0)], vec![Some(3.0)]];
        let scaler = Scaler::fit(&rows, 1).unwrap();
        let (x, mask) = scaler.standardize_row(&[None]);
        assert_eq!(x, vec![0.0]);
        assert_eq!(mask, vec![0.0]);
    }

    #[test]
    fn too_few_observed_values_error_at_fit() {
        let rows = vec![vec![Some(1.0)], vec![None]];
        assert!(matches!(
            Scaler::fit(&rows, 1),
            Err(DataError::InsufficientObserved { channel: 0, count: 1 })
        ));
    }

    /// Brute-force oracle for the fitted statistics.
    #[test]
    fn stats_match_brute_force_mean_and_std() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha20Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let rows: Vec<Vec<Option<f64>>> = (0..500)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        if rng.gen_bool(0.2) {
                            None
                        } else {
                            Some(rng.gen_range(-10.0..90.0))
                        }
                    })
                    .collect()
            })
            .collect();
        let scaler = Scaler::fit(&rows, 3).unwrap();
        for ch in 0..3 {
            let obs: Vec<f64> = rows.iter().filter_map(|r| r[ch]).collect();
            let mean = obs.iter().sum::<f64>() / obs.len() as f64;
            let var = obs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / obs.len() as f64;
            assert!((scaler.means[ch] - mean).abs() < 1e-10);
            assert!((scaler.stds[ch] - var.sqrt()).abs() < 1e-10);
        }
    }
}
