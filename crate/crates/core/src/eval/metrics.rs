//! Evaluation metrics over possibly-gappy hourly series.

use super::EvalError;

fn co_observed<'a>(
    pred: &'a [Option<f64>],
    reference: &'a [Option<f64>],
) -> Result<impl Iterator<Item = (f64, f64)> + 'a, EvalError> {
    if pred.len() != reference.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            reference: reference.len(),
        });
    }
    Ok(pred
        .iter()
        .zip(reference.iter())
        .filter_map(|(p, r)| match (p, r) {
            (Some(p), Some(r)) => Some((*p, *r)),
            _ => None,
        }))
}

/// Mean absolute error over hours where both series are observed.
pub fn mae(pred: &[Option<f64>], reference: &[Option<f64>]) -> Result<f64, EvalError> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for (p, r) in co_observed(pred, reference)? {
        acc += (p - r).abs();
        n += 1;
    }
    if n == 0 {
        return Err(EvalError::NoCoObserved);
    }
    Ok(acc / n as f64)
}

/// Fraction of co-observed hours with `|pred - ref| <= eps`, per threshold.
pub fn hit_rate_curve(
    pred: &[Option<f64>],
    reference: &[Option<f64>],
    epsilons: &[f64],
) -> Result<Vec<(f64, f64)>, EvalError> {
    let pairs: Vec<(f64, f64)> = co_observed(pred, reference)?.collect();
    if pairs.is_empty() {
        return Err(EvalError::NoCoObserved);
    }
    let n = pairs.len() as f64;
    Ok(epsilons
        .iter()
        .map(|&eps| {
            let hits = pairs.iter().filter(|(p, r)| (p - r).abs() <= eps).count();
            (eps, hits as f64 / n)
        })
        .collect())
}

/// The default threshold grid: 0 to 25 in steps of 0.25.
pub fn default_epsilon_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 0.25).collect()
}

/// Pearson autocorrelation at lags `1..=max_lag`; pairs form only where both
/// lagged values are observed. A lag with under three pairs or a degenerate
/// spread contributes 0. Errors on a constant series.
pub fn autocorrelation(series: &[Option<f64>], max_lag: usize) -> Result<Vec<f64>, EvalError> {
    let observed: Vec<f64> = series.iter().filter_map(|v| *v).collect();
    if observed.len() < 2 {
        return Err(EvalError::ConstantSeries);
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let var = observed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    if var == 0.0 {
        return Err(EvalError::ConstantSeries);
    }

    let mut out = Vec::with_capacity(max_lag);
    for lag in 1..=max_lag {
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for t in 0..series.len().saturating_sub(lag) {
            if let (Some(a), Some(b)) = (series[t], series[t + lag]) {
                pairs.push((a, b));
            }
        }
        if pairs.len() < 3 {
            out.push(0.0);
            continue;
        }
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let mut cov = 0.0;
        let mut sx = 0.0;
        let mut sy = 0.0;
        for (a, b) in &pairs {
            cov += (a - mx) * (b - my);
            sx += (a - mx) * (a - mx);
            sy += (b - my) * (b - my);
        }
        if sx == 0.0 || sy == 0.0 {
            out.push(0.0);
        } else {
            out.push((cov / (sx.sqrt() * sy.sqrt())).clamp(-1.0, 1.0));
        }
    }
    Ok(out)
}

/// One histogram bin: `[lo, hi)` except the last, which is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Bin-width rule for histogram exports.
#[derive(Debug, Clone, Copy)]
pub enum BinRule {
    /// `2 * IQR / n^(1/3)`.
    FreedmanDiaconis,
    Width(f64),
}

/// Binned counts for external plotting.
pub fn histogram(values: &[f64], rule: BinRule) -> Vec<HistBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let width = match rule {
        BinRule::Width(w) => w,
        BinRule::FreedmanDiaconis => {
            let q = |f: f64| {
                let idx = f * (sorted.len() - 1) as f64;
                let i = idx.floor() as usize;
                let frac = idx - i as f64;
                if i + 1 < sorted.len() {
                    sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
                } else {
                    sorted[i]
                }
            };
            2.0 * (q(0.75) - q(0.25)) / (sorted.len() as f64).cbrt()
        }
    };
    if !(width > 0.0) || hi == lo {
        return vec![HistBin {
            lo,
            hi,
            count: values.len(),
        }];
    }
    let bins = (((hi - lo) / width).ceil() as usize).max(1);
    let mut out: Vec<HistBin> = (0..bins)
        .map(|i| HistBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        out[idx].count += 1;
    }
    out
}

/// Non-overlapping block means (the 12-hour-average export); a block with no
/// observed hours stays NA.
pub fn block_average(series: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    assert!(window >= 1);
    series
        .chunks(window)
        .map(|chunk| {
            let vals: Vec<f64> = chunk.iter().filter_map(|v| *v).collect();
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        })
        .collect()
}
