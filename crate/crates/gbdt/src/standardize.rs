use serde::{Deserialize, Serialize};

use crate::matrix::DenseMatrix;

/// Divisor used for (near-)constant columns.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-feature mean and population standard deviation from the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationStats {
    pub fn fit(x: &DenseMatrix) -> Self {
        let n = x.n_rows() as f64;
        let d = x.n_cols();
        let mut mean = vec![0.0; d];
        for row in x.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let c = v - m;
                *s += c * c;
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < STD_FLOOR {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            row.iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(v, (m, s))| (v - m) / s),
        );
    }

    pub fn transform(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut data = Vec::with_capacity(x.n_rows() * x.n_cols());
        let mut buf = Vec::with_capacity(x.n_cols());
        for row in x.rows() {
            self.apply_row(row, &mut buf);
            data.extend_from_slice(&buf);
        }
        DenseMatrix::new(x.n_rows(), x.n_cols(), data).expect("shape preserved")
    }
}
