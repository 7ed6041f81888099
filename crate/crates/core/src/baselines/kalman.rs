//! Scalar random-walk Kalman fusion of a multi-channel series.

use super::{rect, BaselineError};
use serde::{Deserialize, Serialize};

/// Random-walk state model: `x_t = x_{t-1} + w`, `w ~ N(0, q)`; the
/// measurement vector is the state replicated across channels plus
/// independent noise `N(0, r_meas_i)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KalmanConfig {
    pub process_variance: f64,
    /// Per-channel measurement variance; one entry replicates to all.
    pub measurement_variance: Vec<f64>,
    pub initial_mean: Option<f64>,
    pub initial_variance: f64,
}

impl KalmanConfig {
    pub fn new(process_variance: f64, measurement_variance: Vec<f64>) -> Self {
        Self {
            process_variance,
            measurement_variance,
            initial_mean: None,
            initial_variance: 1.0,
        }
    }

    /// Data-driven defaults: `q = 0.01 x overall variance`, `r_i` the
    /// per-channel sample variance (floored to stay positive).
    pub fn from_data(matrix: &[Vec<f64>]) -> Result<Self, BaselineError> {
        let cols = rect(matrix)?;
        let n = matrix.len() as f64;
        let mut col_mean = vec![0.0; cols];
        for row in matrix {
            for (c, v) in row.iter().enumerate() {
                col_mean[c] += v;
            }
        }
        for m in col_mean.iter_mut() {
            *m /= n;
        }
        let mut col_var = vec![0.0; cols];
        let mut all_acc = 0.0;
        let mut all_sq = 0.0;
        for row in matrix {
            for (c, v) in row.iter().enumerate() {
                col_var[c] += (v - col_mean[c]) * (v - col_mean[c]);
                all_acc += v;
                all_sq += v * v;
            }
        }
        let total = (matrix.len() * cols) as f64;
        let overall_var = (all_sq / total - (all_acc / total) * (all_acc / total)).max(1e-9);
        let measurement_variance = col_var.iter().map(|v| (v / n).max(1e-9)).collect();
        Ok(Self {
            process_variance: 0.01 * overall_var,
            measurement_variance,
            initial_mean: None,
            initial_variance: overall_var,
        })
    }

    fn validate(&self, cols: usize) -> Result<Vec<f64>, BaselineError> {
        if self.process_variance <= 0.0 {
            return Err(BaselineError::BadConfig(
                "process variance must be positive".into(),
            ));
        }
        let r = if self.measurement_variance.len() == 1 {
            vec![self.measurement_variance[0]; cols]
        } else if self.measurement_variance.len() == cols {
            self.measurement_variance.clone()
        } else {
            return Err(BaselineError::BadConfig(format!(
                "measurement variance has {} entries for {cols} channels",
                self.measurement_variance.len()
            )));
        };
        if r.iter().any(|&v| v <= 0.0) {
            return Err(BaselineError::BadConfig(
                "measurement variances must be positive".into(),
            ));
        }
        if self.initial_variance <= 0.0 {
            return Err(BaselineError::BadConfig(
                "initial variance must be positive".into(),
            ));
        }
        Ok(r)
    }
}

/// Standard predict/update over an imputed (NA-free) matrix; returns the
/// posterior mean per hour. Channel updates fold in sequentially, which for a
/// diagonal measurement covariance matches the joint vector update.
pub fn kalman_denoise(
    matrix: &[Vec<f64>],
    config: &KalmanConfig,
) -> Result<Vec<f64>, BaselineError> {
    let cols = rect(matrix)?;
    let r = config.validate(cols)?;
    for (row, rvals) in matrix.iter().enumerate() {
        for (column, v) in rvals.iter().enumerate() {
            if !v.is_finite() {
                return Err(BaselineError::NonFiniteInput { row, column });
            }
        }
    }

    let mut mean = config
        .initial_mean
        .unwrap_or_else(|| matrix[0].iter().sum::<f64>() / cols as f64);
    let mut var = config.initial_variance;
    let mut out = Vec::with_capacity(matrix.len());
    for row in matrix {
        // Predict.
        var += config.process_variance;
        // Update, one channel at a time.
        for (c, &z) in row.iter().enumerate() {
            let gain = var / (var + r[c]);
            mean += gain * (z - mean);
            var *= 1.0 - gain;
        }
        out.push(mean);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn constant_input_converges_to_the_constant() {
        let c = 7.5;
        let matrix: Vec<Vec<f64>> = (0..150).map(|_| vec![c; 4]).collect();
        let config = KalmanConfig {
            process_variance: 0.01,
            measurement_variance: vec![1.0],
            initial_mean: Some(0.0),
            initial_variance: 1.0,
        };
        let out = kalman_denoise(&matrix, &config).unwrap();
        assert!((out[out.len() - 1] - c).abs() < 1e-6);
    }

    #[test]
    fn huge_process_variance_tracks_the_measurement() {
        let matrix: Vec<Vec<f64>> = (0..50).map(|t| vec![(t as f64).sin() * 5.0]).collect();
        let config = KalmanConfig {
            process_variance: 1e12,
            measurement_variance: vec![1.0],
            initial_mean: Some(0.0),
            initial_variance: 1.0,
        };
        let out = kalman_denoise(&matrix, &config).unwrap();
        for (o, row) in out.iter().zip(matrix.iter()) {
            assert!((o - row[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let matrix = vec![vec![1.0, f64::NAN]];
        let config = KalmanConfig::new(0.1, vec![1.0]);
        assert!(matches!(
            kalman_denoise(&matrix, &config),
            Err(BaselineError::NonFiniteInput { row: 0, column: 1 })
        ));
    }

    /// Independent scalar-recurrence oracle on a noisy random walk.
    #[test]
    fn matches_hand_rolled_scalar_recurrence() {
        let mut rng = ChaCha20Rng::seed_from_u64(50);
        let mut state = 10.0;
        let matrix: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                state += rng.gen_range(-0.5..0.5);
                (0..3)
                    .map(|_| state + rng.gen_range(-2.0..2.0))
                    .collect()
            })
            .collect();
        let config = KalmanConfig {
            process_variance: 0.25,
            measurement_variance: vec![4.0, 2.0, 1.0],
            initial_mean: Some(10.0),
            initial_variance: 5.0,
        };
        let out = kalman_denoise(&matrix, &config).unwrap();

        // Oracle: sequential scalar filter written out longhand.
        let (mut m, mut p) = (10.0f64, 5.0f64);
        let r = [4.0, 2.0, 1.0];
        for (t, row) in matrix.iter().enumerate() {
            p += 0.25;
            for (c, &z) in row.iter().enumerate() {
                let k = p / (p + r[c]);
                m = m + k * (z - m);
                p = (1.0 - k) * p;
            }
            assert!((out[t] - m).abs() < 1e-10, "step {t}: {} vs {m}", out[t]);
        }
    }

    /// Posterior means are convex combinations of past state and
    /// measurements, so they stay inside the running envelope.
    #[test]
    fn output_stays_within_running_min_max() {
        let mut rng = ChaCha20Rng::seed_from_u64(51);
        let matrix: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect();
        let config = KalmanConfig {
            process_variance: 0.5,
            measurement_variance: vec![1.0],
            initial_mean: None,
            initial_variance: 1.0,
        };
        let out = kalman_denoise(&matrix, &config).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (t, row) in matrix.iter().enumerate() {
            for &v in row {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            assert!(
                out[t] >= lo - 1e-12 && out[t] <= hi + 1e-12,
                "step {t}: {} outside [{lo}, {hi}]",
                out[t]
            );
        }
    }
}
