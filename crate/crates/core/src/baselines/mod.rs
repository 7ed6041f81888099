//! Classical comparison methods: KNN imputation feeding Kalman-filter fusion
//! and PCA denoising. All three are deterministic functions of their inputs.

mod kalman;
mod knn;
mod pca;

pub use kalman::{kalman_denoise, KalmanConfig};
pub use knn::knn_impute;
pub use pca::{pca_denoise, symmetric_eigen, PcaConfig, PcaOutput};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("row {row} has no observed value; imputer needs at least one per row")]
    AllNaRow { row: usize },
    #[error("column {column} has no observed value; imputer needs at least one per column")]
    AllNaColumn { column: usize },
    #[error("non-finite input at row {row}, column {column}")]
    NonFiniteInput { row: usize, column: usize },
    #[error("matrix must be rectangular: row {row} has {actual} columns, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("empty matrix")]
    Empty,
    #[error("pca needs more rows than columns (got {rows}x{cols})")]
    TooFewRows { rows: usize, cols: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

pub(crate) fn check_rect<T>(matrix: &[Vec<T>]) -> Result<usize, BaselineError> {
    if matrix.is_empty() || matrix[0].is_empty() {
        return Err(BaselineError::Empty);
    }
    let cols = matrix[0].len();
    for (row, r) in matrix.iter().enumerate() {
        if r.len() != cols {
            return Err(BaselineError::Ragged {
                row,
                expected: cols,
                actual: r.len(),
            });
        }
    }
    Ok(cols)
}

pub(crate) use check_rect as rect;
