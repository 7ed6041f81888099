//! Adam optimizer with bias correction.

use super::NnError;
use serde::{Deserialize, Serialize};

/// Adam constants. The learning rate default follows the training
/// configuration that owns it; the moment constants are the conventional
/// 0.9 / 0.999 / 1e-8.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moments plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        assert!(config.learning_rate > 0.0, "learning rate must be positive");
        assert!((0.0..1.0).contains(&config.beta1), "beta1 must be in [0,1)");
        assert!((0.0..1.0).contains(&config.beta2), "beta2 must be in [0,1)");
        Self {
            config,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected Adam update, in place.
    ///
    /// Rejects non-finite gradients before touching any state, so a failed
    /// call leaves both parameters and moments unchanged.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(NnError::ShapeMismatch {
                params: params.len(),
                grads: grads.len(),
            });
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient { index });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = c.beta1 * self.first_moment[i] + (1.0 - c.beta1) * g;
            let v = c.beta2 * self.second_moment[i] + (1.0 - c.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_fresh_state_leaves_params_unchanged() {
        let mut state = AdamState::new(3, AdamConfig::with_learning_rate(0.1));
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        state.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate_times_sign() {
        // With fresh state, m_hat = g and v_hat = g^2, so the update is
        // lr * g / (|g| + eps) ~= lr * sign(g).
        let lr = 0.05;
        let mut state = AdamState::new(2, AdamConfig::with_learning_rate(lr));
        let mut params = vec![0.0, 0.0];
        state.step(&mut params, &[3.0, -0.2]).unwrap();
        assert!((params[0] + lr).abs() < 1e-8);
        assert!((params[1] - lr).abs() < 1e-7);
    }

    #[test]
    fn nan_gradient_leaves_state_untouched() {
        let mut state = AdamState::new(2, AdamConfig::with_learning_rate(0.1));
        let mut params = vec![1.0, 2.0];
        state.step(&mut params, &[0.5, 0.5]).unwrap();
        let params_after = params.clone();
        let moments_before = (state.first_moment.clone(), state.second_moment.clone());
        let err = state.step(&mut params, &[f64::NAN, 0.0]);
        assert!(matches!(err, Err(NnError::NonFiniteGradient { index: 0 })));
        assert_eq!(params, params_after);
        assert_eq!(state.first_moment, moments_before.0);
        assert_eq!(state.second_moment, moments_before.1);
        assert_eq!(state.step_count(), 1);
    }

    /// Ten steps on f(w) = w^2 from w = 1 against an independently written
    /// scalar Adam recurrence.
    #[test]
    fn ten_step_trajectory_matches_scalar_recurrence() {
        let lr = 0.1;
        let mut state = AdamState::new(1, AdamConfig::with_learning_rate(lr));
        let mut w = vec![1.0];

        // Oracle: textbook update written out with plain scalars.
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let mut wo = 1.0;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=10 {
            let g = 2.0 * w[0];
            state.step(&mut w, &[g]).unwrap();

            let go = 2.0 * wo;
            m = b1 * m + (1.0 - b1) * go;
            v = b2 * v + (1.0 - b2) * go * go;
            let mh = m / (1.0 - b1_pow(b1, t));
            let vh = v / (1.0 - b1_pow(b2, t));
            wo -= lr * mh / (vh.sqrt() + eps);

            assert!(
                (w[0] - wo).abs() < 1e-10,
                "step {t}: {} vs oracle {wo}",
                w[0]
            );
        }

        fn b1_pow(b: f64, t: usize) -> f64 {
            let mut acc = 1.0;
            for _ in 0..t {
                acc *= b;
            }
            acc
        }
    }

    #[test]
    fn second_moments_stay_nonnegative() {
        let mut state = AdamState::new(1, AdamConfig::with_learning_rate(0.1));
        let mut params = vec![0.3];
        for g in [-5.0, 2.0, -0.1, 0.0, 9.0] {
            state.step(&mut params, &[g]).unwrap();
            assert!(state.second_moment[0] >= 0.0);
        }
        assert_eq!(state.step_count(), 5);
    }
}
