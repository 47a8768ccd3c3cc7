//! Regression trees and depth-limited histogram growth.

use serde::{Deserialize, Serialize};

use crate::binning::{BinMapper, BinnedMatrix};

const LEAF: i32 = -1;

/// Splits must improve the objective by more than this.
const MIN_SPLIT_GAIN: f64 = 1e-12;

/// A regression tree stored as flat parallel arrays. Node 0 is the root.
/// Leaves have `feature == -1` and keep their output in `value`.
/// Internal nodes send `x[feature] <= threshold` to `left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
    pub gain: Vec<f64>,
    pub cover: Vec<f64>,
}

impl Tree {
    fn with_capacity(n: usize) -> Self {
        Self {
            feature: Vec::with_capacity(n),
            threshold: Vec::with_capacity(n),
            left: Vec::with_capacity(n),
            right: Vec::with_capacity(n),
            value: Vec::with_capacity(n),
            gain: Vec::with_capacity(n),
            cover: Vec::with_capacity(n),
        }
    }

    /// A single-leaf tree.
    pub fn leaf(value: f64) -> Self {
        let mut t = Self::with_capacity(1);
        t.push_leaf(value, 0.0);
        t
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.feature[node] == LEAF
    }

    pub fn n_splits(&self) -> usize {
        self.feature.iter().filter(|&&f| f != LEAF).count()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut n = 0;
        while !self.is_leaf(n) {
            let f = self.feature[n] as usize;
            n = if row[f] <= self.threshold[n] {
                self.left[n] as usize
            } else {
                self.right[n] as usize
            };
        }
        self.value[n]
    }

    /// Longest root-to-leaf path, counted in edges.
    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((n, d)) = stack.pop() {
            if self.is_leaf(n) {
                best = best.max(d);
            } else {
                stack.push((self.left[n] as usize, d + 1));
                stack.push((self.right[n] as usize, d + 1));
            }
        }
        best
    }

    /// Checks structural consistency after deserialization.
    pub(crate) fn validate(&self, n_features: usize) -> Result<(), String> {
        let n = self.n_nodes();
        let lens = [
            self.threshold.len(),
            self.left.len(),
            self.right.len(),
            self.value.len(),
            self.gain.len(),
            self.cover.len(),
        ];
        if n == 0 || lens.iter().any(|&l| l != n) {
            return Err("tree arrays have inconsistent lengths".into());
        }
        for i in 0..n {
            if self.is_leaf(i) {
                continue;
            }
            let f = self.feature[i];
            if f < 0 || f as usize >= n_features {
                return Err(format!("node {i} uses feature {f} out of range"));
            }
            // children are always allocated after their parent
            for c in [self.left[i] as usize, self.right[i] as usize] {
                if c <= i || c >= n {
                    return Err(format!("node {i} has invalid child {c}"));
                }
            }
        }
        Ok(())
    }

    fn push_leaf(&mut self, value: f64, cover: f64) -> usize {
        self.feature.push(LEAF);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.gain.push(0.0);
        self.cover.push(cover);
        self.feature.len() - 1
    }

    fn set_split(&mut self, node: usize, s: &SplitCandidate, threshold: f64, left: usize, right: usize) {
        self.feature[node] = s.feature as i32;
        self.threshold[node] = threshold;
        self.left[node] = left as u32;
        self.right[node] = right as u32;
        self.value[node] = 0.0;
        self.gain[node] = s.gain;
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct GradPair {
    g: f64,
    h: f64,
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    bin: usize,
    gain: f64,
}

/// Gradient/hessian histogram over the sampled features of one node.
struct Histogram {
    bins: Vec<GradPair>,
}

pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_child_hessian: f64,
    pub l2: f64,
    pub learning_rate: f64,
}

/// Grows one tree against fixed gradients. Borrowed state is shared across
/// all trees of a training run; `scratch` is reused between calls.
pub(crate) struct TreeGrower<'a> {
    bins: &'a BinnedMatrix,
    mapper: &'a BinMapper,
    grad: &'a [f64],
    hess: &'a [f64],
    features: &'a [usize],
    offsets: Vec<usize>,
    params: &'a TreeParams,
    scratch: &'a mut Vec<u32>,
    tree: Tree,
}

impl<'a> TreeGrower<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bins: &'a BinnedMatrix,
        mapper: &'a BinMapper,
        grad: &'a [f64],
        hess: &'a [f64],
        features: &'a [usize],
        params: &'a TreeParams,
        scratch: &'a mut Vec<u32>,
    ) -> Self {
        let mut offsets = Vec::with_capacity(features.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &f in features {
            acc += mapper.n_bins(f);
            offsets.push(acc);
        }
        Self {
            bins,
            mapper,
            grad,
            hess,
            features,
            offsets,
            params,
            scratch,
            tree: Tree::with_capacity(64),
        }
    }

    pub fn grow(mut self, rows: &mut [u32]) -> Tree {
        let hist = self.build_histogram(rows);
        let (g, h) = self.sums(rows);
        self.grow_node(rows, hist, g, h, 0);
        self.tree
    }

    fn sums(&self, rows: &[u32]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(g, h), &r| {
            (g + self.grad[r as usize], h + self.hess[r as usize])
        })
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.params.l2) * self.params.learning_rate
    }

    fn grow_node(&mut self, rows: &mut [u32], hist: Histogram, g: f64, h: f64, depth: usize) -> usize {
        let node = self.tree.push_leaf(self.leaf_value(g, h), h);
        if depth >= self.params.max_depth
            || rows.len() < 2
            || h < 2.0 * self.params.min_child_hessian
        {
            return node;
        }
        let Some(split) = self.best_split(&hist, g, h) else {
            return node;
        };

        let n_left = self.partition(rows, split.feature, split.bin as u8);
        let (left_rows, right_rows) = rows.split_at_mut(n_left);
        let (gl, hl) = self.sums(left_rows);
        let (gr, hr) = self.sums(right_rows);

        // Build the smaller child directly, derive the larger from the parent.
        let (left_hist, right_hist) = if left_rows.len() <= right_rows.len() {
            let small = self.build_histogram(left_rows);
            let mut large = hist;
            large.subtract_from_child(&small);
            (small, large)
        } else {
            let small = self.build_histogram(right_rows);
            let mut large = hist;
            large.subtract_from_child(&small);
            (large, small)
        };

        let threshold = self.mapper.cut(split.feature, split.bin);
        let l = self.grow_node(left_rows, left_hist, gl, hl, depth + 1);
        let r = self.grow_node(right_rows, right_hist, gr, hr, depth + 1);
        self.tree.set_split(node, &split, threshold, l, r);
        node
    }

    fn build_histogram(&self, rows: &[u32]) -> Histogram {
        let mut bins = vec![GradPair::default(); *self.offsets.last().unwrap_or(&0)];
        for (k, &f) in self.features.iter().enumerate() {
            let col = self.bins.column(f);
            let hist = &mut bins[self.offsets[k]..self.offsets[k + 1]];
            for &r in rows {
                let r = r as usize;
                let b = &mut hist[col[r] as usize];
                b.g += self.grad[r];
                b.h += self.hess[r];
            }
        }
        Histogram { bins }
    }

    fn best_split(&self, hist: &Histogram, g: f64, h: f64) -> Option<SplitCandidate> {
        let lambda = self.params.l2;
        let mcw = self.params.min_child_hessian;
        let parent_score = g * g / (h + lambda);
        let mut best: Option<SplitCandidate> = None;
        let mut best_gain = MIN_SPLIT_GAIN;
        for (k, &f) in self.features.iter().enumerate() {
            let bins = &hist.bins[self.offsets[k]..self.offsets[k + 1]];
            let (mut gl, mut hl) = (0.0, 0.0);
            // the last bin cannot be a left side: nothing would go right
            for (b, pair) in bins.iter().enumerate().take(bins.len().saturating_sub(1)) {
                gl += pair.g;
                hl += pair.h;
                if hl < mcw {
                    continue;
                }
                let hr = h - hl;
                if hr < mcw {
                    break;
                }
                let gr = g - gl;
                let gain =
                    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_score);
                if gain > best_gain {
                    best_gain = gain;
                    best = Some(SplitCandidate { feature: f, bin: b, gain });
                }
            }
        }
        best
    }

    /// Stable partition: rows with `bin <= split_bin` first. Returns the
    /// number of left rows.
    fn partition(&mut self, rows: &mut [u32], feature: usize, split_bin: u8) -> usize {
        let col = self.bins.column(feature);
        self.scratch.clear();
        let mut n_left = 0;
        for i in 0..rows.len() {
            let r = rows[i];
            if col[r as usize] <= split_bin {
                rows[n_left] = r;
                n_left += 1;
            } else {
                self.scratch.push(r);
            }
        }
        rows[n_left..].copy_from_slice(self.scratch);
        n_left
    }
}

impl Histogram {
    /// Turns `self` (the parent) into the sibling of `child`.
    fn subtract_from_child(&mut self, child: &Histogram) {
        for (p, c) in self.bins.iter_mut().zip(&child.bins) {
            p.g -= c.g;
            p.h -= c.h;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;

    fn grow_on(x: &DenseMatrix, grad: &[f64], hess: &[f64], max_depth: usize) -> Tree {
        let mapper = BinMapper::fit(x, 256);
        let bins = mapper.bin_matrix(x);
        let features: Vec<usize> = (0..x.n_cols()).collect();
        let params = TreeParams {
            max_depth,
            min_child_hessian: 1e-3,
            l2: 0.0,
            learning_rate: 1.0,
        };
        let mut scratch = Vec::new();
        let mut rows: Vec<u32> = (0..x.n_rows() as u32).collect();
        TreeGrower::new(&bins, &mapper, grad, hess, &features, &params, &mut scratch).grow(&mut rows)
    }

    #[test]
    fn single_step_function_is_recovered() {
        let x = DenseMatrix::from_rows(&(0..20).map(|i| [i as f64]).collect::<Vec<_>>()).unwrap();
        // target: -1 below 10, +1 at or above; grad = -target with unit hessian
        let grad: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { -1.0 }).collect();
        let hess = vec![1.0; 20];
        let t = grow_on(&x, &grad, &hess, 3);
        assert_eq!(t.feature[0], 0);
        assert_eq!(t.threshold[0], 9.0);
        assert_eq!(t.predict(&[3.0]), -1.0);
        assert_eq!(t.predict(&[15.0]), 1.0);
        // both halves are pure, so growth stops after one split
        assert_eq!(t.n_splits(), 1);
        assert!(t.validate(1).is_ok());
    }

    #[test]
    fn depth_limit_is_respected() {
        let n = 256;
        let x = DenseMatrix::from_rows(&(0..n).map(|i| [i as f64]).collect::<Vec<_>>()).unwrap();
        let grad: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let hess = vec![1.0; n];
        for d in 1..5 {
            assert!(grow_on(&x, &grad, &hess, d).depth() <= d);
        }
    }

    #[test]
    fn zero_gradient_yields_single_leaf() {
        let x = DenseMatrix::from_rows(&(0..10).map(|i| [i as f64]).collect::<Vec<_>>()).unwrap();
        let t = grow_on(&x, &[0.0; 10], &[1.0; 10], 4);
        assert_eq!(t.n_nodes(), 1);
        assert_eq!(t.depth(), 0);
    }
}
