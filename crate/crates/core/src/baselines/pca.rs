//! PCA denoising via a cyclic Jacobi eigensolver on the covariance.

use super::{rect, BaselineError};
use serde::{Deserialize, Serialize};

/// Component selection: an explicit count or a retained-variance fraction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaConfig {
    Components(usize),
    VarianceFraction(f64),
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig::VarianceFraction(0.9)
    }
}

#[derive(Debug, Clone)]
pub struct PcaOutput {
    /// Reconstruction from the retained components, un-centered.
    pub denoised: Vec<Vec<f64>>,
    /// Row mean of the reconstruction — the fused series.
    pub fused: Vec<f64>,
    /// Number of components actually retained.
    pub components: usize,
    /// All covariance eigenvalues, descending, negatives clamped to zero.
    pub eigenvalues: Vec<f64>,
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors-as-columns) sorted descending.
pub fn symmetric_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let norm: f64 = matrix
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(1e-300);
    let tol = 1e-14 * norm;

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() < tol {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..d {
                    let (aip, aiq) = (a[i][p], a[i][q]);
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for j in 0..d {
                    let (apj, aqj) = (a[p][j], a[q][j]);
                    a[p][j] = c * apj - s * aqj;
                    a[q][j] = s * apj + c * aqj;
                }
                for i in 0..d {
                    let (vip, viq) = (v[i][p], v[i][q]);
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap().then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let eigenvectors: Vec<Vec<f64>> = (0..d)
        .map(|i| order.iter().map(|&j| v[i][j]).collect())
        .collect();
    (eigenvalues, eigenvectors)
}

/// Column-centers, projects onto the top components of the covariance,
/// reconstructs, and un-centers. Degenerate covariance is handled by rank
/// truncation: components with non-positive eigenvalues carry no variance
/// and a variance-fraction selection never picks them.
pub fn pca_denoise(matrix: &[Vec<f64>], config: PcaConfig) -> Result<PcaOutput, BaselineError> {
    let d = rect(matrix)?;
    let t = matrix.len();
    if t <= d {
        return Err(BaselineError::TooFewRows { rows: t, cols: d });
    }
    for (row, r) in matrix.iter().enumerate() {
        for (column, v) in r.iter().enumerate() {
            if !v.is_finite() {
                return Err(BaselineError::NonFiniteInput { row, column });
            }
        }
    }

    let mut mean = vec![0.0; d];
    for row in matrix {
        for (c, v) in row.iter().enumerate() {
            mean[c] += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= t as f64;
    }
    let centered: Vec<Vec<f64>> = matrix
        .iter()
        .map(|row| row.iter().zip(mean.iter()).map(|(v, m)| v - m).collect())
        .collect();

    let mut cov = vec![vec![0.0; d]; d];
    for row in &centered {
        for i in 0..d {
            for j in i..d {
                cov[i][j] += row[i] * row[j];
            }
        }
    }
    let denom = (t - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }

    let (raw_eigenvalues, vectors) = symmetric_eigen(&cov);
    let eigenvalues: Vec<f64> = raw_eigenvalues.iter().map(|&l| l.max(0.0)).collect();

    let k = match config {
        PcaConfig::Components(k) => {
            if k == 0 || k > d {
                return Err(BaselineError::BadConfig(format!(
                    "component count {k} must be in 1..={d}"
                )));
            }
            k
        }
        PcaConfig::VarianceFraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(BaselineError::BadConfig(format!(
                    "variance fraction {f} must be in (0, 1]"
                )));
            }
            let total: f64 = eigenvalues.iter().sum();
            if total <= 0.0 {
                1
            } else {
                let mut acc = 0.0;
                let mut k = d;
                for (i, l) in eigenvalues.iter().enumerate() {
                    acc += l;
                    if acc >= f * total - 1e-15 {
                        k = i + 1;
                        break;
                    }
                }
                k
            }
        }
    };

    // Reconstruction: X_hat = Xc V_k V_k^T + mean.
    let mut denoised = vec![vec![0.0; d]; t];
    let mut fused = vec![0.0; t];
    for (ti, row) in centered.iter().enumerate() {
        let mut scores = vec![0.0; k];
        for j in 0..k {
            let mut acc = 0.0;
            for i in 0..d {
                acc += row[i] * vectors[i][j];
            }
            scores[j] = acc;
        }
        let mut acc_row = 0.0;
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..k {
                acc += scores[j] * vectors[i][j];
            }
            let value = acc + mean[i];
            denoised[ti][i] = value;
            acc_row += value;
        }
        fused[ti] = acc_row / d as f64;
    }

    Ok(PcaOutput {
        denoised,
        fused,
        components: k,
        eigenvalues,
    })
}
