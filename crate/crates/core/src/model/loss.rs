//! The three-term negative ELBO and its pieces.
//!
//! The standalone functions here are the reference path: evaluation, tests,
//! and reports all go through them. Training rebuilds the identical
//! arithmetic from tape primitives (same elementwise expressions, same
//! summation order), so tape node values agree bitwise with these functions.

use super::{GaussianParams, LossWeights, SensorSnapshot, VeliForward};
use crate::nn::NnError;

/// `ln(2 pi)`.
pub(crate) fn ln_2pi() -> f64 {
    (2.0 * std::f64::consts::PI).ln()
}

/// Closed-form KL divergence between diagonal Gaussians, summed over
/// dimensions. Zero iff `q == p`; non-negative up to rounding.
pub fn kl_diag_gaussian(q: &GaussianParams, p: &GaussianParams) -> Result<f64, NnError> {
    if q.dim() != p.dim() {
        return Err(NnError::DimensionMismatch {
            expected: q.dim(),
            actual: p.dim(),
        });
    }
    let mut acc = 0.0;
    for i in 0..q.dim() {
        let (mq, lq) = (q.mean()[i], q.log_variance()[i]);
        let (mp, lp) = (p.mean()[i], p.log_variance()[i]);
        let a = (lq - lp).exp();
        let dm = mq - mp;
        let b = (dm * dm) / lp.exp();
        let t = ((a + b) + -1.0) + (lp - lq);
        acc += t * 0.5;
    }
    Ok(acc)
}

/// Masked heteroscedastic Gaussian negative log-likelihood:
/// `sum_i psi_i [ ln(2 pi sigma2_i) + (x_i - y_i - mu_i)^2 / sigma2_i ]`
/// with `(mu, ln sigma2)` taken from the noise head's output. Masked
/// channels contribute nothing.
pub fn reconstruction_nll(x: &[f64], mask: &[f64], y_hat: &[f64], sens: &GaussianParams) -> f64 {
    let d = x.len();
    assert_eq!(mask.len(), d);
    assert_eq!(y_hat.len(), d);
    assert_eq!(sens.dim(), d);
    let c = ln_2pi();
    let mut acc = 0.0;
    for i in 0..d {
        let resid = (x[i] - y_hat[i]) - sens.mean()[i];
        let sq = resid * resid;
        let lv = sens.log_variance()[i];
        let ratio = sq / lv.exp();
        let term = ratio + (lv + c);
        acc += mask[i] * term;
    }
    acc
}

/// The three loss terms and their weighted total.
///
/// `total` is always `beta_z*kl_z + beta_y*kl_y + alpha*recon_nll` evaluated
/// in that exact order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub kl_z: f64,
    pub kl_y: f64,
    pub recon_nll: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(kl_z: f64, kl_y: f64, recon_nll: f64, weights: &LossWeights) -> Self {
        let total = weights.beta_z * kl_z + weights.beta_y * kl_y + weights.alpha * recon_nll;
        Self {
            kl_z,
            kl_y,
            recon_nll,
            total,
        }
    }
}

/// Negative-ELBO breakdown for one forward pass: `kl_z` between the encoder
/// posterior and its prior, `kl_y` averaged over the Monte-Carlo samples,
/// and the reconstruction likelihood with the *sampled* `y` as the estimate.
pub fn loss(
    fwd: &VeliForward,
    snap: &SensorSnapshot,
    weights: &LossWeights,
) -> Result<LossBreakdown, NnError> {
    let kl_z = kl_diag_gaussian(&fwd.q_z, &fwd.p_z)?;
    let inv_k = 1.0 / fwd.samples.len() as f64;
    let mut kl_y_acc = 0.0;
    let mut recon_acc = 0.0;
    for sample in &fwd.samples {
        kl_y_acc += kl_diag_gaussian(&sample.q_y, &sample.p_y)?;
        recon_acc += reconstruction_nll(snap.x(), snap.mask(), &sample.y, &sample.sens);
    }
    let kl_y = kl_y_acc * inv_k;
    let recon_nll = recon_acc * inv_k;
    Ok(LossBreakdown::new(kl_z, kl_y, recon_nll, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DrawnNoise, SampleForward, SensorSnapshot, VeliConfig, VeliModel};
    use crate::pipeline::{HourStamp, Scaler};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn gp(mean: &[f64], var: &[f64]) -> GaussianParams {
        GaussianParams::new(mean.to_vec(), var.iter().map(|v| v.ln()).collect())
    }

    #[test]
    fn kl_of_identical_gaussians_is_zero() {
        let q = gp(&[0.0, 1.0], &[1.0, 2.0]);
        assert_eq!(kl_diag_gaussian(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn kl_unit_mean_shift_is_half() {
        let q = gp(&[1.0], &[1.0]);
        let p = gp(&[0.0], &[1.0]);
        assert!((kl_diag_gaussian(&q, &p).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kl_variance_two_case() {
        let q = gp(&[0.0], &[2.0]);
        let p = gp(&[0.0], &[1.0]);
        let expected = 0.5 * (2.0 - 1.0 - 2.0f64.ln());
        let got = kl_diag_gaussian(&q, &p).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.153426).abs() < 1e-6);
    }

    /// Numerical-integration oracle: Simpson's rule on `∫ q ln(q/p)` after the
    /// substitution `x = mu_q + sigma_q t` over `t ∈ [-12, 12]`.
    #[test]
    fn kl_matches_numerical_integration() {
        fn kl_numeric(mq: f64, vq: f64, mp: f64, vp: f64) -> f64 {
            let (sq, sp) = (vq.sqrt(), vp.sqrt());
            let log_q = |x: f64| -0.5 * ((x - mq) * (x - mq) / vq) - (sq * (2.0 * std::f64::consts::PI).sqrt()).ln();
            let log_p = |x: f64| -0.5 * ((x - mp) * (x - mp) / vp) - (sp * (2.0 * std::f64::consts::PI).sqrt()).ln();
            let f = |t: f64| {
                let x = mq + sq * t;
                let w = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
                w * (log_q(x) - log_p(x))
            };
            let n = 20_000;
            let (a, b) = (-12.0, 12.0);
            let h = (b - a) / n as f64;
            let mut acc = f(a) + f(b);
            for i in 1..n {
                let x = a + i as f64 * h;
                acc += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
            }
            acc * h / 3.0
        }

        let mut rng = ChaCha20Rng::seed_from_u64(8);
        use rand::Rng;
        for _ in 0..50 {
            let mq = rng.gen_range(-3.0..3.0);
            let mp = rng.gen_range(-3.0..3.0);
            let vq = rng.gen_range(0.1..4.0);
            let vp = rng.gen_range(0.1..4.0);
            let q = gp(&[mq], &[vq]);
            let p = gp(&[mp], &[vp]);
            let analytic = kl_diag_gaussian(&q, &p).unwrap();
            let numeric = kl_numeric(mq, vq, mp, vp);
            assert!(
                (analytic - numeric).abs() < 1e-6,
                "KL({mq},{vq} || {mp},{vp}): {analytic} vs {numeric}"
            );
        }
    }

    #[test]
    fn kl_dimension_mismatch_is_an_error() {
        let q = gp(&[0.0], &[1.0]);
        let p = gp(&[0.0, 0.0], &[1.0, 1.0]);
        assert!(kl_diag_gaussian(&q, &p).is_err());
    }

    #[test]
    fn nll_zero_residual_at_matching_variance() {
        // sigma^2 = 1/(2 pi) makes ln(2 pi sigma^2) vanish.
        let sens = gp(&[0.0], &[1.0 / (2.0 * std::f64::consts::PI)]);
        let nll = reconstruction_nll(&[1.0], &[1.0], &[1.0], &sens);
        assert!(nll.abs() < 1e-12);
    }

    /// Direct formula evaluation: x=2, y=1, mu=0, sigma^2=1 gives ln(2 pi) + 1.
    #[test]
    fn nll_unit_case() {
        let sens = gp(&[0.0], &[1.0]);
        let nll = reconstruction_nll(&[2.0], &[1.0], &[1.0], &sens);
        let expected = (2.0 * std::f64::consts::PI).ln() + 1.0;
        assert!((nll - expected).abs() < 1e-12);
        assert!((nll - 2.837877).abs() < 1e-6);
    }

    #[test]
    fn nll_fully_masked_row_is_zero() {
        let sens = gp(&[3.0, -1.0], &[0.5, 2.0]);
        let nll = reconstruction_nll(&[0.0, 0.0], &[0.0, 0.0], &[9.0, -9.0], &sens);
        assert_eq!(nll, 0.0);
    }

    #[test]
    fn loss_zero_when_posteriors_match_priors_and_residual_vanishes() {
        let q = gp(&[0.0], &[1.0]);
        let sens = gp(&[0.0], &[1.0 / (2.0 * std::f64::consts::PI)]);
        let fwd = VeliForward {
            q_z: q.clone(),
            p_z: q.clone(),
            samples: vec![SampleForward {
                z: vec![0.0],
                q_y: q.clone(),
                p_y: q.clone(),
                sens,
                y: vec![1.0],
            }],
        };
        let snap = SensorSnapshot::new(vec![1.0], vec![1.0], HourStamp(0)).unwrap();
        let breakdown = loss(&fwd, &snap, &LossWeights::default()).unwrap();
        assert!(breakdown.total.abs() < 1e-12);
    }

    #[test]
    fn weighted_sum_with_paper_defaults() {
        // alpha=1 weights the reconstruction, beta_z=10 the latent KL,
        // beta_y=0.1 the observation KL: 10*1 + 0.1*2 + 1*3.
        let b = LossBreakdown::new(1.0, 2.0, 3.0, &LossWeights::default());
        assert!((b.total - 13.2).abs() < 1e-12);
    }

    #[test]
    fn total_is_linear_in_each_weight() {
        let (kz, ky, rc) = (0.7, 1.3, -2.1);
        let base = LossWeights::default();
        for scale in [0.5, 2.0, 7.0] {
            let wa = LossWeights { alpha: base.alpha * scale, ..base };
            let la = LossBreakdown::new(kz, ky, rc, &wa);
            let l0 = LossBreakdown::new(kz, ky, rc, &base);
            assert!(((la.total - l0.total) - (wa.alpha - base.alpha) * rc).abs() < 1e-12);
        }
    }

    /// Compositional oracle: the breakdown from `loss` equals standalone
    /// calls on the same forward result.
    #[test]
    fn loss_matches_standalone_recomputation() {
        let mut config = VeliConfig::new(4);
        config.latent = 2;
        config.hidden = 5;
        let model = VeliModel::new(config, Scaler::identity(4), 21).unwrap();
        let snap =
            SensorSnapshot::new(vec![0.5, -1.0, 0.0, 2.0], vec![1.0, 1.0, 0.0, 1.0], HourStamp(0))
                .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let noise = DrawnNoise::draw(&mut rng, 3, 2, 4);
        let fwd = model.forward_with_noise(&snap, &noise).unwrap();
        let weights = LossWeights::default();
        let breakdown = loss(&fwd, &snap, &weights).unwrap();

        let kl_z = kl_diag_gaussian(&fwd.q_z, &fwd.p_z).unwrap();
        let inv_k = 1.0 / 3.0;
        let kl_y: f64 = fwd
            .samples
            .iter()
            .map(|s| kl_diag_gaussian(&s.q_y, &s.p_y).unwrap())
            .sum::<f64>()
            * inv_k;
        let recon: f64 = fwd
            .samples
            .iter()
            .map(|s| reconstruction_nll(snap.x(), snap.mask(), &s.y, &s.sens))
            .sum::<f64>()
            * inv_k;
        assert_eq!(breakdown.kl_z, kl_z);
        assert!((breakdown.kl_y - kl_y).abs() < 1e-15);
        assert!((breakdown.recon_nll - recon).abs() < 1e-12);
        let expected =
            weights.beta_z * kl_z + weights.beta_y * breakdown.kl_y + weights.alpha * breakdown.recon_nll;
        assert_eq!(breakdown.total, expected);
    }

    /// Property: KL is non-negative (within rounding) for random valid pairs.
    #[test]
    fn kl_non_negative_on_random_pairs() {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for _ in 0..500 {
            let dim = rng.gen_range(1..5);
            let q = GaussianParams::new(
                (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect(),
                (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            );
            let p = GaussianParams::new(
                (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect(),
                (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            );
            let kl = kl_diag_gaussian(&q, &p).unwrap();
            assert!(kl >= -1e-9, "negative KL {kl}");
            let self_kl = kl_diag_gaussian(&q, &q).unwrap();
            assert_eq!(self_kl, 0.0);
        }
    }
}
