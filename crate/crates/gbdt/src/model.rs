use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binning::BinMapper;
use crate::config::TrainConfig;
use crate::error::{GbdtError, Result};
use crate::matrix::DenseMatrix;
use crate::standardize::StandardizationStats;
use crate::tree::{Tree, TreeGrower, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Floor on the per-row softmax hessian so pure nodes stay well conditioned.
const MIN_HESSIAN: f64 = 1e-16;

/// Multiclass boosted-tree ensemble. `trees[round][class]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    format_version: u32,
    /// Free-form provenance (config hash, seed) carried in the file.
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    classes: Vec<String>,
    feature_names: Vec<String>,
    config: TrainConfig,
    stats: Option<StandardizationStats>,
    base_score: Vec<f64>,
    trees: Vec<Vec<Tree>>,
}

/// Softmax cross-entropy on the full training set, before any tree and
/// after every round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub initial_loss: f64,
    pub round_loss: Vec<f64>,
}

impl GbdtModel {
    /// A model with no trees: predictions are `softmax(base_score)`.
    pub fn constant(
        classes: Vec<String>,
        feature_names: Vec<String>,
        base_score: Vec<f64>,
    ) -> Result<Self> {
        if classes.len() != base_score.len() {
            return Err(GbdtError::Shape(format!(
                "{} base scores for {} classes",
                base_score.len(),
                classes.len()
            )));
        }
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            metadata: BTreeMap::new(),
            classes,
            feature_names,
            config: TrainConfig::default(),
            stats: None,
            base_score,
            trees: Vec::new(),
        })
    }

    /// Trains on `x` with labels `y` given as indices into `classes`.
    pub fn fit(
        x: &DenseMatrix,
        y: &[usize],
        classes: &[String],
        feature_names: &[String],
        cfg: &TrainConfig,
    ) -> Result<(Self, TrainingLog)> {
        cfg.validate()?;
        let n = x.n_rows();
        let k = classes.len();
        if n == 0 || x.n_cols() == 0 {
            return Err(GbdtError::EmptyInput);
        }
        if y.len() != n {
            return Err(GbdtError::Shape(format!("{} labels for {n} rows", y.len())));
        }
        if feature_names.len() != x.n_cols() {
            return Err(GbdtError::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x.n_cols()
            )));
        }
        if let Some((row, col)) = x.find_non_finite() {
            return Err(GbdtError::NonFinite { row, col });
        }
        let mut counts = vec![0usize; k];
        for &label in y {
            if label >= k {
                return Err(GbdtError::LabelOutOfRange { label, n_classes: k });
            }
            counts[label] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count();
        if present < 2 {
            return Err(GbdtError::SingleClass(present));
        }

        let stats = cfg.standardize.then(|| StandardizationStats::fit(x));
        let xt = match &stats {
            Some(s) => s.transform(x),
            None => x.clone(),
        };
        let mapper = BinMapper::fit(&xt, cfg.n_bins);
        let bins = mapper.bin_matrix(&xt);

        // add-one smoothed log class prior
        let base_score: Vec<f64> = counts
            .iter()
            .map(|&c| ((c as f64 + 1.0) / (n + k) as f64).ln())
            .collect();

        let mut scores: Vec<f64> = (0..n).flat_map(|_| base_score.iter().copied()).collect();
        let mut probs = vec![0.0; n * k];
        let mut grad = vec![vec![0.0; n]; k];
        let mut hess = vec![vec![0.0; n]; k];
        let params = TreeParams {
            max_depth: cfg.max_depth,
            min_child_hessian: cfg.min_child_hessian,
            l2: cfg.l2_leaf_reg,
            learning_rate: cfg.learning_rate,
        };
        let n_rows_sampled = ((n as f64 * cfg.row_subsample).round() as usize).clamp(1, n);
        let d = x.n_cols();
        let n_cols_sampled = ((d as f64 * cfg.col_subsample).round() as usize).clamp(1, d);

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut scratch = Vec::with_capacity(n);
        let mut trees = Vec::with_capacity(cfg.rounds);
        let initial_loss = cross_entropy(&scores, y, k);
        let mut round_loss = Vec::with_capacity(cfg.rounds);

        for _ in 0..cfg.rounds {
            softmax_rows(&scores, k, &mut probs);
            for i in 0..n {
                for c in 0..k {
                    let p = probs[i * k + c];
                    let target = if y[i] == c { 1.0 } else { 0.0 };
                    grad[c][i] = p - target;
                    hess[c][i] = (p * (1.0 - p)).max(MIN_HESSIAN);
                }
            }
            let mut sampled: Vec<u32> = index::sample(&mut rng, n, n_rows_sampled)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            sampled.sort_unstable();

            let mut round_trees = Vec::with_capacity(k);
            for c in 0..k {
                let mut features: Vec<usize> = index::sample(&mut rng, d, n_cols_sampled).into_vec();
                features.sort_unstable();
                let mut rows = sampled.clone();
                let tree = TreeGrower::new(
                    &bins,
                    &mapper,
                    &grad[c],
                    &hess[c],
                    &features,
                    &params,
                    &mut scratch,
                )
                .grow(&mut rows);
                round_trees.push(tree);
            }
            for (i, row) in xt.rows().enumerate() {
                for (c, tree) in round_trees.iter().enumerate() {
                    scores[i * k + c] += tree.predict(row);
                }
            }
            trees.push(round_trees);
            round_loss.push(cross_entropy(&scores, y, k));
        }

        let model = Self {
            format_version: MODEL_FORMAT_VERSION,
            metadata: BTreeMap::new(),
            classes: classes.to_vec(),
            feature_names: feature_names.to_vec(),
            config: cfg.clone(),
            stats,
            base_score,
            trees,
        };
        Ok((
            model,
            TrainingLog {
                initial_loss,
                round_loss,
            },
        ))
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn stats(&self) -> Option<&StandardizationStats> {
        self.stats.as_ref()
    }

    pub fn base_score(&self) -> &[f64] {
        &self.base_score
    }

    pub fn trees(&self) -> &[Vec<Tree>] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Accumulated per-class scores before the softmax.
    pub fn raw_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(GbdtError::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.n_features()
            )));
        }
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(GbdtError::NonFinite { row: 0, col });
        }
        let standardized;
        let row = match &self.stats {
            Some(s) => {
                let mut buf = Vec::with_capacity(x.len());
                s.apply_row(x, &mut buf);
                standardized = buf;
                &standardized[..]
            }
            None => x,
        };
        let mut scores = self.base_score.clone();
        for round in &self.trees {
            for (s, tree) in scores.iter_mut().zip(round) {
                *s += tree.predict(row);
            }
        }
        Ok(scores)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let scores = self.raw_scores(x)?;
        let mut p = vec![0.0; scores.len()];
        softmax_rows(&scores, scores.len(), &mut p);
        Ok(p)
    }

    /// Index of the most probable class; ties go to the lower index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    pub fn predict_matrix(&self, x: &DenseMatrix) -> Result<Vec<usize>> {
        x.rows().map(|r| self.predict(r)).collect()
    }

    /// Per-feature sum of split gains over all trees, normalized to sum to 1.
    pub fn gain_importance(&self) -> Result<Vec<f64>> {
        let mut imp = vec![0.0; self.n_features()];
        for tree in self.trees.iter().flatten() {
            for (node, &f) in tree.feature.iter().enumerate() {
                if f >= 0 {
                    imp[f as usize] += tree.gain[node];
                }
            }
        }
        let total: f64 = imp.iter().sum();
        if total <= 0.0 {
            return Err(GbdtError::NoSplits);
        }
        imp.iter_mut().for_each(|v| *v /= total);
        Ok(imp)
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        let model: Self = serde_json::from_reader(r)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.to_writer(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(GbdtError::FormatVersion {
                found: self.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let k = self.classes.len();
        let d = self.n_features();
        if self.base_score.len() != k {
            return Err(GbdtError::Malformed("base score length != class count".into()));
        }
        if let Some(s) = &self.stats {
            if s.mean.len() != d || s.std.len() != d {
                return Err(GbdtError::Malformed("standardization length != feature count".into()));
            }
        }
        for (r, round) in self.trees.iter().enumerate() {
            if round.len() != k {
                return Err(GbdtError::Malformed(format!("round {r} has {} trees", round.len())));
            }
            for tree in round {
                tree.validate(d).map_err(GbdtError::Malformed)?;
            }
        }
        Ok(())
    }
}

/// Row-wise softmax of a flat `n x k` score buffer into `out`.
fn softmax_rows(scores: &[f64], k: usize, out: &mut [f64]) {
    for (s, p) in scores.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (pi, &si) in p.iter_mut().zip(s) {
            *pi = (si - max).exp();
            sum += *pi;
        }
        p.iter_mut().for_each(|v| *v /= sum);
    }
}

fn cross_entropy(scores: &[f64], y: &[usize], k: usize) -> f64 {
    let total: f64 = scores
        .chunks_exact(k)
        .zip(y)
        .map(|(s, &label)| {
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - s[label]
        })
        .sum();
    total / y.len() as f64
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
