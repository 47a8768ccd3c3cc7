//! Stage glue: pose sequences to feature tables, split, train, evaluate.

use std::collections::HashMap;

use pitchpose_gbdt::{DenseMatrix, GbdtError, GbdtModel, TrainingLog};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::eval::{
    aggregate_importance, classification_metrics, confusion_matrix, group_accuracy,
    stratified_split, EvalError, EvaluationReport, Share, REPORT_FORMAT_VERSION,
};
use crate::events::{detect_events, EventConfig};
use crate::features::{assemble, feature_names, uniform_feature_names, uniform_sampling_features, FeatureSet};
use crate::io::{DetectionRecord, FeatureTable};
use crate::pose::{PitchType, PoseSequence};

pub const SPLIT_FORMAT_VERSION: u32 = 1;
pub const TOP_FEATURES: usize = 20;
const HANDEDNESS_COLUMN: &str = "meta.h_rhp";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("episode {0:?} has no label")]
    MissingLabel(String),
    #[error("episode {0:?} is not in the feature table")]
    UnknownEpisode(String),
    #[error("episode {0:?} appears more than once")]
    DuplicateEpisode(String),
    #[error("feature column {0:?} is missing")]
    MissingColumn(String),
    #[error("split format version {0} is not supported")]
    SplitVersion(u32),
    #[error("no usable episodes")]
    Empty,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Gbdt(#[from] GbdtError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// An episode that was dropped during extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionFailure {
    pub episode_id: String,
    pub reason: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub table: FeatureTable,
    pub detections: Vec<DetectionRecord>,
    pub failures: Vec<ExtractionFailure>,
}

impl Extraction {
    /// Failure counts keyed by reason code.
    pub fn failure_counts(&self) -> Vec<(String, usize)> {
        let mut m: HashMap<&str, usize> = HashMap::new();
        for f in &self.failures {
            *m.entry(&f.reason).or_default() += 1;
        }
        let mut v: Vec<(String, usize)> = m.into_iter().map(|(k, n)| (k.to_string(), n)).collect();
        v.sort();
        v
    }
}

/// Detects events and assembles the full feature vector for every
/// sequence. Order of the input is kept; failed episodes are listed
/// rather than aborting the batch.
pub fn extract(seqs: &[PoseSequence], cfg: &EventConfig) -> Extraction {
    let results: Vec<_> = seqs
        .par_iter()
        .map(|s| {
            let id = s.episode_id();
            let fail = |reason: &str, message: String| {
                Err((
                    DetectionRecord::skipped(id, reason, &message),
                    ExtractionFailure {
                        episode_id: id.to_string(),
                        reason: reason.to_string(),
                        message,
                    },
                ))
            };
            let (report, ev) = match detect_events(s, cfg) {
                Ok(v) => v,
                Err(e) => return fail(e.reason_code(), e.to_string()),
            };
            match assemble(s, &ev, report.handedness) {
                Ok(row) => Ok((DetectionRecord::ok(id, &report, &ev), row)),
                Err(e) => fail(e.reason_code(), e.to_string()),
            }
        })
        .collect();
    let mut out = Extraction {
        table: FeatureTable::new(feature_names().to_vec()),
        detections: Vec::with_capacity(seqs.len()),
        failures: Vec::new(),
    };
    for (s, r) in seqs.iter().zip(results) {
        match r {
            Ok((det, row)) => {
                out.detections.push(det);
                out.table.push(s.episode_id().to_string(), s.label(), row);
            }
            Err((det, f)) => {
                out.detections.push(det);
                out.failures.push(f);
            }
        }
    }
    out
}

/// Pose coordinates at `k` evenly spaced frames, with handedness inferred
/// the same way as in [`extract`].
pub fn extract_uniform(seqs: &[PoseSequence], k: usize) -> Extraction {
    let results: Vec<_> = seqs
        .par_iter()
        .map(|s| {
            let h = crate::events::infer_handedness(s).handedness;
            uniform_sampling_features(s, k, h).map_err(|e| ExtractionFailure {
                episode_id: s.episode_id().to_string(),
                reason: e.reason_code().to_string(),
                message: e.to_string(),
            })
        })
        .collect();
    let mut out = Extraction {
        table: FeatureTable::new(uniform_feature_names(k)),
        detections: Vec::new(),
        failures: Vec::new(),
    };
    for (s, r) in seqs.iter().zip(results) {
        match r {
            Ok(row) => out.table.push(s.episode_id().to_string(), s.label(), row),
            Err(f) => out.failures.push(f),
        }
    }
    out
}

pub fn class_names() -> Vec<String> {
    PitchType::codes()
}

fn label_indices(table: &FeatureTable) -> Result<Vec<usize>> {
    table
        .labels
        .iter()
        .zip(&table.episode_ids)
        .map(|(l, id)| l.map(|p| p.ordinal()).ok_or_else(|| PipelineError::MissingLabel(id.clone())))
        .collect()
}

/// Column indices used for training: the configured subset when the table
/// holds the full event-anchored vector, every column otherwise.
pub fn training_columns(table: &FeatureTable, set: FeatureSet) -> Vec<usize> {
    if table.names == feature_names() {
        set.indices()
    } else {
        (0..table.names.len()).collect()
    }
}

/// Train/test assignment by episode id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub fn make_split(table: &FeatureTable, cfg: &PipelineConfig) -> Result<SplitAssignment> {
    if table.is_empty() {
        return Err(PipelineError::Empty);
    }
    let y = label_indices(table)?;
    let (train, test) = stratified_split(&y, PitchType::ALL.len(), &cfg.split)?;
    let ids = |idx: Vec<usize>| idx.into_iter().map(|i| table.episode_ids[i].clone()).collect();
    Ok(SplitAssignment {
        format_version: SPLIT_FORMAT_VERSION,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        train: ids(train),
        test: ids(test),
    })
}

fn row_positions(table: &FeatureTable, ids: &[String]) -> Result<Vec<usize>> {
    let mut pos = HashMap::with_capacity(table.len());
    for (i, id) in table.episode_ids.iter().enumerate() {
        if pos.insert(id.as_str(), i).is_some() {
            return Err(PipelineError::DuplicateEpisode(id.clone()));
        }
    }
    ids.iter()
        .map(|id| pos.get(id.as_str()).copied().ok_or_else(|| PipelineError::UnknownEpisode(id.clone())))
        .collect()
}

fn matrix(table: &FeatureTable, rows: &[usize], cols: &[usize]) -> Result<DenseMatrix> {
    let data: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| table.rows[r][c]).collect())
        .collect();
    Ok(DenseMatrix::from_rows(&data)?)
}

pub fn train_model(
    table: &FeatureTable,
    split: &SplitAssignment,
    cfg: &PipelineConfig,
) -> Result<(GbdtModel, TrainingLog)> {
    if split.format_version != SPLIT_FORMAT_VERSION {
        return Err(PipelineError::SplitVersion(split.format_version));
    }
    let rows = row_positions(table, &split.train)?;
    if rows.is_empty() {
        return Err(PipelineError::Empty);
    }
    let y_all = label_indices(table)?;
    let y: Vec<usize> = rows.iter().map(|&r| y_all[r]).collect();
    let cols = training_columns(table, cfg.feature_set);
    let names: Vec<String> = cols.iter().map(|&c| table.names[c].clone()).collect();
    let x = matrix(table, &rows, &cols)?;
    let (mut model, log) = GbdtModel::fit(&x, &y, &class_names(), &names, &cfg.train)?;
    model.set_metadata("config_hash", cfg.hash());
    model.set_metadata("seed", cfg.seed.to_string());
    Ok((model, log))
}

fn handedness_groups(table: &FeatureTable, rows: &[usize]) -> Result<Vec<String>> {
    let c = table
        .column_index(HANDEDNESS_COLUMN)
        .ok_or_else(|| PipelineError::MissingColumn(HANDEDNESS_COLUMN.into()))?;
    Ok(rows
        .iter()
        .map(|&r| if table.rows[r][c] > 0.5 { "RHP" } else { "LHP" }.to_string())
        .collect())
}

/// Scores a model on the test side of `split`.
pub fn evaluate_model(
    model: &GbdtModel,
    table: &FeatureTable,
    split: &SplitAssignment,
    cfg: &PipelineConfig,
) -> Result<EvaluationReport> {
    if split.format_version != SPLIT_FORMAT_VERSION {
        return Err(PipelineError::SplitVersion(split.format_version));
    }
    let test = row_positions(table, &split.test)?;
    let train = row_positions(table, &split.train)?;
    if test.is_empty() {
        return Err(PipelineError::Empty);
    }
    let cols = model
        .feature_names()
        .iter()
        .map(|n| table.column_index(n).ok_or_else(|| PipelineError::MissingColumn(n.clone())))
        .collect::<Result<Vec<usize>>>()?;
    let x = matrix(table, &test, &cols)?;
    let y_all = label_indices(table)?;
    let y: Vec<usize> = test.iter().map(|&r| y_all[r]).collect();
    let pred = model.predict_matrix(&x)?;
    let classes = model.classes().to_vec();
    let metrics = classification_metrics(&y, &pred, &classes)?;
    let confusion = confusion_matrix(&y, &pred, &classes)?;
    let groups = handedness_groups(table, &test)?;
    let by_handedness = group_accuracy(&y, &pred, &groups, &["RHP".to_string(), "LHP".to_string()])?;

    let (importance, top_features) = match model.gain_importance() {
        Ok(imp) => {
            let mut attribution = cfg.attribution.clone();
            let train_groups = handedness_groups(table, &train)?;
            if !train_groups.is_empty() {
                let rhp = train_groups.iter().filter(|g| *g == "RHP").count();
                attribution.rhp_share = rhp as f64 / train_groups.len() as f64;
            }
            let agg = aggregate_importance(&imp, model.feature_names(), &attribution).ok();
            (agg, top_features(&imp, model.feature_names(), TOP_FEATURES))
        }
        Err(GbdtError::NoSplits) => (None, Vec::new()),
        Err(e) => return Err(e.into()),
    };
    Ok(EvaluationReport {
        format_version: REPORT_FORMAT_VERSION,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        n_train: train.len(),
        n_test: test.len(),
        metrics,
        confusion,
        by_handedness,
        importance,
        top_features,
    })
}

/// Highest-importance features; ties keep column order.
pub fn top_features(imp: &[f64], names: &[String], n: usize) -> Vec<Share> {
    let mut idx: Vec<usize> = (0..imp.len()).collect();
    idx.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
    idx.into_iter()
        .take(n)
        .map(|i| Share {
            name: names[i].clone(),
            share: imp[i],
        })
        .collect()
}

pub struct RunOutput {
    pub split: SplitAssignment,
    pub model: GbdtModel,
    pub log: TrainingLog,
    pub report: EvaluationReport,
}

/// Split, train and evaluate in one go.
pub fn run(table: &FeatureTable, cfg: &PipelineConfig) -> Result<RunOutput> {
    let split = make_split(table, cfg)?;
    let (model, log) = train_model(table, &split, cfg)?;
    let report = evaluate_model(&model, table, &split, cfg)?;
    Ok(RunOutput {
        split,
        model,
        log,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, SynthConfig};

    fn small_cfg() -> PipelineConfig {
        let mut cfg = PipelineConfig::with_seed(3);
        cfg.train.rounds = 20;
        cfg.train.max_depth = 4;
        cfg
    }

    fn dataset(n: usize) -> Vec<PoseSequence> {
        let cfg = SynthConfig {
            n_episodes: n,
            seed: 11,
            ..SynthConfig::default()
        };
        generate_dataset(&cfg).unwrap().into_iter().map(|e| e.sequence).collect()
    }

    #[test]
    fn extraction_keeps_order_and_reports_failures() {
        let mut seqs = dataset(40);
        seqs[5] = seqs[5].map_points(|_| crate::pose::Vec3::zeros()).unwrap();
        let ex = extract(&seqs, &EventConfig::default());
        assert_eq!(ex.detections.len(), 40);
        assert_eq!(ex.table.len() + ex.failures.len(), 40);
        assert_eq!(ex.failures.len(), 1);
        assert_eq!(ex.failures[0].episode_id, seqs[5].episode_id());
        let kept: Vec<&str> = seqs
            .iter()
            .map(|s| s.episode_id())
            .filter(|id| *id != seqs[5].episode_id())
            .collect();
        assert_eq!(ex.table.episode_ids, kept);
        assert_eq!(ex.detections[5].status, "skipped");
    }

    #[test]
    fn run_is_deterministic_and_consistent() {
        let ex = extract(&dataset(120), &EventConfig::default());
        let cfg = small_cfg();
        let a = run(&ex.table, &cfg).unwrap();
        let b = run(&ex.table, &cfg).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.split, b.split);
        let r = &a.report;
        assert_eq!(r.n_train + r.n_test, ex.table.len());
        let n_hand: usize = r.by_handedness.iter().map(|g| g.n).sum();
        assert_eq!(n_hand, r.n_test);
        let imp = r.importance.as_ref().unwrap();
        let cat: f64 = imp.by_category.iter().map(|s| s.share).sum();
        assert!((cat - 1.0).abs() < 1e-9);
        assert_eq!(r.top_features.len(), TOP_FEATURES);
    }

    #[test]
    fn feature_set_limits_columns() {
        let ex = extract(&dataset(60), &EventConfig::default());
        let mut cfg = small_cfg();
        cfg.feature_set = FeatureSet::PoseOnly;
        let split = make_split(&ex.table, &cfg).unwrap();
        let (model, _) = train_model(&ex.table, &split, &cfg).unwrap();
        assert_eq!(model.n_features(), FeatureSet::PoseOnly.len());
        assert!(model.feature_names().iter().all(|n| n.starts_with("pose.") || n == "meta.h_rhp"));
    }

    #[test]
    fn unknown_split_ids_are_rejected() {
        let ex = extract(&dataset(60), &EventConfig::default());
        let cfg = small_cfg();
        let mut split = make_split(&ex.table, &cfg).unwrap();
        split.train.push("nope".into());
        assert!(matches!(
            train_model(&ex.table, &split, &cfg),
            Err(PipelineError::UnknownEpisode(_))
        ));
    }
}
