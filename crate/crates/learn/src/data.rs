//! Dense row-major matrices and the bridges from the masked feature matrix
//! (median imputation, z-normalization, row/column selection).

use ad_core::features::WindowedFeatureMatrix;
use ad_core::labeling::WindowLabel;

use crate::{LearnError, Result};

/// Dense row-major matrix with no missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> DenseMatrix {
        DenseMatrix {
            data: vec![0.0; n_rows * n_cols],
            n_rows,
            n_cols,
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<DenseMatrix> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in &rows {
            if r.len() != n_cols {
                return Err(LearnError::Dimension("ragged row lengths".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            data,
            n_rows,
            n_cols,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n_cols + c] = v;
    }

    /// Append the columns of `other` to the right (same row count).
    pub fn hcat(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_rows != other.n_rows {
            return Err(LearnError::Dimension("hcat row mismatch".into()));
        }
        let n_cols = self.n_cols + other.n_cols;
        let mut data = Vec::with_capacity(self.n_rows * n_cols);
        for r in 0..self.n_rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(DenseMatrix {
            data,
            n_rows: self.n_rows,
            n_cols,
        })
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, c)).collect()
    }
}

/// Per-column medians over the present cells of the selected rows; columns
/// with no present cell get 0.
pub fn column_medians(
    matrix: &WindowedFeatureMatrix,
    rows: &[usize],
    cols: &[usize],
) -> Vec<f64> {
    cols.iter()
        .map(|c| {
            let vals: Vec<f64> = rows.iter().filter_map(|r| matrix.get(*r, *c)).collect();
            if vals.is_empty() {
                0.0
            } else {
                ad_core::features::stats::median(&vals)
            }
        })
        .collect()
}

/// Materialize selected rows and columns, filling missing cells from
/// `medians` (parallel to `cols`).
pub fn extract_dense(
    matrix: &WindowedFeatureMatrix,
    rows: &[usize],
    cols: &[usize],
    medians: &[f64],
) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(rows.len(), cols.len());
    for (ri, r) in rows.iter().enumerate() {
        for (ci, c) in cols.iter().enumerate() {
            out.set(ri, ci, matrix.get(*r, *c).unwrap_or(medians[ci]));
        }
    }
    out
}

/// Binary labels (AD=1) for the selected rows.
pub fn labels_for(matrix: &WindowedFeatureMatrix, rows: &[usize]) -> Vec<u8> {
    rows.iter()
        .map(|r| u8::from(matrix.rows[*r].label == WindowLabel::Ad))
        .collect()
}

/// Z-normalize columns in place; returns the per-column (mean, std) and a
/// constant-column flag (std == 0, left centered).
pub fn z_normalize(x: &mut DenseMatrix) -> Vec<(f64, f64, bool)> {
    let n = x.n_rows() as f64;
    let mut stats = Vec::with_capacity(x.n_cols());
    for c in 0..x.n_cols() {
        let mean = (0..x.n_rows()).map(|r| x.get(r, c)).sum::<f64>() / n;
        let var = (0..x.n_rows())
            .map(|r| (x.get(r, c) - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0).max(1.0);
        let std = var.sqrt();
        let constant = std <= 1e-12;
        for r in 0..x.n_rows() {
            let v = x.get(r, c) - mean;
            x.set(r, c, if constant { v } else { v / std });
        }
        stats.push((mean, std, constant));
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hcat_and_access() {
        let a = DenseMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(vec![vec![5.0], vec![6.0]]).unwrap();
        let c = a.hcat(&b).unwrap();
        assert_eq!(c.n_cols(), 3);
        assert_eq!(c.row(1), &[3.0, 4.0, 6.0]);
    }

    #[test]
    fn z_normalize_flags_constant_columns() {
        let mut m =
            DenseMatrix::from_rows(vec![vec![1.0, 7.0], vec![2.0, 7.0], vec![3.0, 7.0]]).unwrap();
        let stats = z_normalize(&mut m);
        assert!(!stats[0].2);
        assert!(stats[1].2);
        assert!(m.column(1).iter().all(|v| v.abs() < 1e-12));
        let col0 = m.column(0);
        assert!((col0.iter().sum::<f64>()).abs() < 1e-12);
    }
}
