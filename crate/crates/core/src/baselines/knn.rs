//! K-nearest-neighbour imputation under masked Euclidean distance.

use super::{rect, BaselineError};

/// Fills each NA with the mean of the corresponding column over the `k`
/// nearest rows; observed entries pass through unchanged.
///
/// Distance between rows uses only co-observed columns, rescaled by
/// `d / |co-observed|` so sparsity does not shrink distances; rows sharing no
/// observed column are unreachable as neighbours. Only rows where the target
/// column is observed qualify, ties break on row index, and fewer than `k`
/// candidates fall back to however many exist.
pub fn knn_impute(
    matrix: &[Vec<Option<f64>>],
    k: usize,
) -> Result<Vec<Vec<f64>>, BaselineError> {
    let cols = rect(matrix)?;
    if k == 0 {
        return Err(BaselineError::BadConfig("k must be at least 1".into()));
    }
    for (row, r) in matrix.iter().enumerate() {
        if r.iter().all(|v| v.is_none()) {
            return Err(BaselineError::AllNaRow { row });
        }
        for (column, v) in r.iter().enumerate() {
            if let Some(x) = v {
                if !x.is_finite() {
                    return Err(BaselineError::NonFiniteInput { row, column });
                }
            }
        }
    }
    for column in 0..cols {
        if matrix.iter().all(|r| r[column].is_none()) {
            return Err(BaselineError::AllNaColumn { column });
        }
    }

    let dist = |a: &[Option<f64>], b: &[Option<f64>]| -> Option<f64> {
        let mut acc = 0.0;
        let mut co = 0usize;
        for (x, y) in a.iter().zip(b.iter()) {
            if let (Some(x), Some(y)) = (x, y) {
                acc += (x - y) * (x - y);
                co += 1;
            }
        }
        if co == 0 {
            None
        } else {
            Some((acc * cols as f64 / co as f64).sqrt())
        }
    };

    let mut out: Vec<Vec<f64>> = matrix
        .iter()
        .map(|r| r.iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        .collect();

    for (row, r) in matrix.iter().enumerate() {
        let missing: Vec<usize> = (0..cols).filter(|&c| r[c].is_none()).collect();
        if missing.is_empty() {
            continue;
        }
        // Distances to every other row, computed once per target row.
        let mut neighbours: Vec<(f64, usize)> = Vec::new();
        for (other, o) in matrix.iter().enumerate() {
            if other == row {
                continue;
            }
            if let Some(d) = dist(r, o) {
                neighbours.push((d, other));
            }
        }
        neighbours.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &c in &missing {
            let mut acc = 0.0;
            let mut used = 0usize;
            for &(_, other) in &neighbours {
                if let Some(v) = matrix[other][c] {
                    acc += v;
                    used += 1;
                    if used == k {
                        break;
                    }
                }
            }
            if used == 0 {
                // Column is observed somewhere but only in rows sharing no
                // co-observed feature; fall back to the column mean.
                let vals: Vec<f64> = matrix.iter().filter_map(|rr| rr[c]).collect();
                out[row][c] = vals.iter().sum::<f64>() / vals.len() as f64;
            } else {
                out[row][c] = acc / used as f64;
            }
        }
    }
    Ok(out)
}
