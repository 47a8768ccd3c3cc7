//! Quantile binning of continuous features.
//!
//! Each feature gets a sorted list of cut values taken from the training data
//! itself. A value `v` falls in bin `b` where `b` is the number of cuts strictly
//! below `v`, so `bin(v) <= b` holds exactly when `v <= cuts[b]`. Because cuts
//! are drawn from the data by rank, any strictly increasing transform of a
//! column yields identical bin assignments for the training rows.

use serde::{Deserialize, Serialize};

use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    cuts: Vec<Vec<f64>>,
}

/// Column-major bin indices.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    n_rows: usize,
    cols: Vec<Vec<u8>>,
}

impl BinnedMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn column(&self, f: usize) -> &[u8] {
        &self.cols[f]
    }
}

impl BinMapper {
    pub fn fit(x: &DenseMatrix, n_bins: usize) -> Self {
        assert!((2..=256).contains(&n_bins));
        let cuts = (0..x.n_cols())
            .map(|j| {
                let mut v: Vec<f64> = x.column(j).collect();
                v.sort_by(f64::total_cmp);
                quantile_cuts(&v, n_bins)
            })
            .collect();
        Self { cuts }
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    /// Number of bins for feature `f` (cuts + 1).
    pub fn n_bins(&self, f: usize) -> usize {
        self.cuts[f].len() + 1
    }

    pub fn cut(&self, f: usize, bin: usize) -> f64 {
        self.cuts[f][bin]
    }

    pub fn bin(&self, f: usize, v: f64) -> u8 {
        self.cuts[f].partition_point(|&c| c < v) as u8
    }

    pub fn bin_matrix(&self, x: &DenseMatrix) -> BinnedMatrix {
        let cols = (0..x.n_cols())
            .map(|j| x.column(j).map(|v| self.bin(j, v)).collect())
            .collect();
        BinnedMatrix {
            n_rows: x.n_rows(),
            cols,
        }
    }
}

/// Cut values for one sorted column. At most `n_bins - 1` cuts, all strictly
/// below the column maximum.
fn quantile_cuts(sorted: &[f64], n_bins: usize) -> Vec<f64> {
    let Some(&max) = sorted.last() else {
        return Vec::new();
    };
    let mut unique = sorted.to_vec();
    unique.dedup();
    if unique.len() <= n_bins {
        unique.pop();
        return unique;
    }
    let n = sorted.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(n_bins - 1);
    for i in 1..n_bins {
        let v = sorted[i * n / n_bins];
        if v < max && cuts.last().map_or(true, |&last| v > last) {
            cuts.push(v);
        }
    }
    cuts
}
