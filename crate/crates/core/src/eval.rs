//! Splitting, classification metrics, confusion analysis and importance
//! aggregation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{EVENT_NAMES, METRIC_NAMES, TRANSITION_NAMES};
use crate::pose::{JointId, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("class {class} has {count} sample(s); at least 2 are required")]
    ClassTooSmall { class: usize, count: usize },
    #[error("label {label} is not a known class (have {n_classes})")]
    UnknownClass { label: usize, n_classes: usize },
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("train fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("feature name {0:?} cannot be attributed")]
    UnmappedFeature(String),
    #[error("attribution table: {0}")]
    Attribution(String),
    #[error("empty input")]
    Empty,
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            stratified: true,
            seed: 0,
        }
    }
}

/// Number of training rows out of `n`; the test side is rounded up.
fn train_size(n: usize, train_fraction: f64) -> usize {
    let n_test = ((n as f64) * (1.0 - train_fraction) - 1e-9).ceil().max(0.0) as usize;
    n - n_test.min(n)
}

/// Splits class counts into per-class training quotas: floor of the
/// proportional share, with the leftover rows going to the largest
/// fractional remainders (lower class index on ties).
pub fn allocate_train_counts(counts: &[usize], n_train: usize) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0; counts.len()];
    }
    let exact: Vec<f64> = counts
        .iter()
        .map(|&c| n_train as f64 * c as f64 / n as f64)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n_train - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if quota[c] < counts[c] {
            quota[c] += 1;
            left -= 1;
        }
    }
    quota
}

/// Seeded train/test split. With stratification each class is shuffled
/// and cut separately so class shares are preserved. Returned index lists
/// are sorted ascending.
pub fn stratified_split(
    labels: &[usize],
    n_classes: usize,
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(EvalError::BadFraction(spec.train_fraction));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(EvalError::UnknownClass { label: l, n_classes });
        }
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_train = train_size(labels.len(), spec.train_fraction);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    if spec.stratified {
        for (c, idx) in by_class.iter().enumerate() {
            if idx.len() == 1 {
                return Err(EvalError::ClassTooSmall { class: c, count: 1 });
            }
        }
        let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
        let quotas = allocate_train_counts(&counts, n_train);
        for (mut idx, q) in by_class.into_iter().zip(quotas) {
            idx.shuffle(&mut rng);
            test.extend_from_slice(&idx[q..]);
            idx.truncate(q);
            train.extend(idx);
        }
    } else {
        let mut idx: Vec<usize> = (0..labels.len()).collect();
        idx.shuffle(&mut rng);
        test = idx.split_off(n_train);
        train = idx;
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn check_labels(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::Length(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&label) = y_true.iter().chain(y_pred).find(|&&l| l >= n_classes) {
        return Err(EvalError::UnknownClass { label, n_classes });
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn classification_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    classes: &[String],
) -> Result<ClassificationReport> {
    let k = classes.len();
    check_labels(y_true, y_pred, k)?;
    let cm = count_matrix(y_true, y_pred, k);
    let correct: usize = (0..k).map(|c| cm[c][c]).sum();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm[c][c];
            let support: usize = cm[c].iter().sum();
            let predicted: usize = cm.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: classes[c].clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    Ok(ClassificationReport {
        accuracy: ratio(correct, y_true.len()),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
    })
}

fn count_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut cm = vec![vec![0usize; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        cm[t][p] += 1;
    }
    cm
}

/// A row-normalized confusion row, or `"n/a"` for a class with no
/// support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfusionRow {
    Recall(Vec<f64>),
    NotAvailable(String),
}

impl ConfusionRow {
    pub fn values(&self) -> Option<&[f64]> {
        match self {
            ConfusionRow::Recall(v) => Some(v),
            ConfusionRow::NotAvailable(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// `counts[true][pred]`.
    pub counts: Vec<Vec<usize>>,
    pub normalized: Vec<ConfusionRow>,
}

impl ConfusionMatrix {
    /// Row-normalized cell, `None` for a zero-support row.
    pub fn rate(&self, truth: usize, pred: usize) -> Option<f64> {
        self.normalized[truth].values().map(|r| r[pred])
    }
}

pub fn confusion_matrix(
    y_true: &[usize],
    y_pred: &[usize],
    classes: &[String],
) -> Result<ConfusionMatrix> {
    let k = classes.len();
    check_labels(y_true, y_pred, k)?;
    let counts = count_matrix(y_true, y_pred, k);
    let normalized = counts
        .iter()
        .map(|row| {
            let s: usize = row.iter().sum();
            if s == 0 {
                ConfusionRow::NotAvailable("n/a".to_string())
            } else {
                ConfusionRow::Recall(row.iter().map(|&c| c as f64 / s as f64).collect())
            }
        })
        .collect();
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
        normalized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub group: String,
    pub n: usize,
    pub correct: usize,
    /// `None` when the group has no rows.
    pub accuracy: Option<f64>,
}

/// Accuracy within each listed group, in the order given.
pub fn group_accuracy(
    y_true: &[usize],
    y_pred: &[usize],
    groups: &[String],
    group_names: &[String],
) -> Result<Vec<GroupAccuracy>> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::Length(y_true.len(), y_pred.len()));
    }
    if y_true.len() != groups.len() {
        return Err(EvalError::Length(y_true.len(), groups.len()));
    }
    Ok(group_names
        .iter()
        .map(|g| {
            let (n, correct) = groups
                .iter()
                .zip(y_true.iter().zip(y_pred))
                .filter(|(gr, _)| *gr == g)
                .fold((0, 0), |(n, c), (_, (t, p))| (n + 1, c + usize::from(t == p)));
            GroupAccuracy {
                group: g.clone(),
                n,
                correct,
                accuracy: (n > 0).then(|| correct as f64 / n as f64),
            }
        })
        .collect())
}

/// How biomechanical metrics are credited to joints in the joint view.
///
/// Each metric maps to role weights summing to one. A role is a joint name
/// or a side-relative name (`lead_`, `trail_`, `throwing_`, `glove_` +
/// limb joint). Side-relative roles are split between the left and right
/// joint by `rhp_share`, the fraction of right-handed pitchers the model
/// was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionTable {
    pub rhp_share: f64,
    pub metrics: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Default for AttributionTable {
    fn default() -> Self {
        let mut metrics = BTreeMap::new();
        let mut put = |m: &str, roles: &[(&str, f64)]| {
            metrics.insert(
                m.to_string(),
                roles.iter().map(|(r, w)| (r.to_string(), *w)).collect(),
            );
        };
        put("lead_knee_flexion", &[("lead_knee", 1.0)]);
        put("trail_knee_flexion", &[("trail_knee", 1.0)]);
        put("throwing_elbow_flexion", &[("throwing_elbow", 1.0)]);
        put("glove_elbow_flexion", &[("glove_elbow", 1.0)]);
        for m in ["trunk_forward_tilt", "trunk_lateral_tilt", "trunk_rotation"] {
            put(m, &[("neck", 0.5), ("pelvis", 0.5)]);
        }
        put("pelvis_rotation", &[("left_hip", 0.5), ("right_hip", 0.5)]);
        put(
            "hip_shoulder_separation",
            &[
                ("left_shoulder", 0.25),
                ("right_shoulder", 0.25),
                ("left_hip", 0.25),
                ("right_hip", 0.25),
            ],
        );
        put("throwing_shoulder_abduction", &[("throwing_shoulder", 1.0)]);
        put("lead_shin_angle", &[("lead_ankle", 0.5), ("lead_knee", 0.5)]);
        put("trail_shin_angle", &[("trail_ankle", 0.5), ("trail_knee", 0.5)]);
        for m in ["cog_x", "cog_y", "cog_z"] {
            put(m, &[("pelvis", 1.0)]);
        }
        Self {
            rhp_share: 0.5,
            metrics,
        }
    }
}

/// Left-side weight of each side-relative role prefix for a right-hander.
fn role_side(prefix: &str) -> Option<Side> {
    match prefix {
        "lead" | "glove" => Some(Side::Left),
        "trail" | "throwing" => Some(Side::Right),
        _ => None,
    }
}

fn limb_joint(side: Side, limb: &str) -> Option<JointId> {
    Some(match limb {
        "shoulder" => side.shoulder(),
        "elbow" => side.elbow(),
        "wrist" => side.wrist(),
        "hip" => side.hip(),
        "knee" => side.knee(),
        "ankle" => side.ankle(),
        _ => return None,
    })
}

impl AttributionTable {
    /// Resolves a role into concrete joint weights.
    fn resolve_role(&self, role: &str) -> Result<Vec<(JointId, f64)>> {
        if let Ok(j) = role.parse::<JointId>() {
            return Ok(vec![(j, 1.0)]);
        }
        let bad = || EvalError::Attribution(format!("unknown role {role:?}"));
        let (prefix, limb) = role.split_once('_').ok_or_else(bad)?;
        let rhp_side = role_side(prefix).ok_or_else(bad)?;
        let rhp_joint = limb_joint(rhp_side, limb).ok_or_else(bad)?;
        let lhp_joint = limb_joint(rhp_side.opposite(), limb).ok_or_else(bad)?;
        Ok(vec![
            (rhp_joint, self.rhp_share),
            (lhp_joint, 1.0 - self.rhp_share),
        ])
    }

    /// Joint weights of one metric, summing to one.
    pub fn joints_for(&self, metric: &str) -> Result<Vec<(JointId, f64)>> {
        let roles = self
            .metrics
            .get(metric)
            .ok_or_else(|| EvalError::Attribution(format!("no entry for metric {metric:?}")))?;
        let mut out = Vec::new();
        for (role, w) in roles {
            for (j, s) in self.resolve_role(role)? {
                out.push((j, w * s));
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rhp_share) {
            return Err(EvalError::Attribution(format!(
                "rhp_share {} outside [0, 1]",
                self.rhp_share
            )));
        }
        for m in METRIC_NAMES {
            let total: f64 = self.joints_for(m)?.iter().map(|(_, w)| w).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(EvalError::Attribution(format!(
                    "weights for {m} sum to {total}"
                )));
            }
        }
        Ok(())
    }
}

pub const CATEGORIES: [&str; 4] = ["pose", "biomech", "delta", "handedness"];
pub const REGIONS: [&str; 4] = ["arms", "head", "trunk", "lower_body"];

pub fn region_of(j: JointId) -> &'static str {
    use JointId::*;
    match j {
        LeftShoulder | RightShoulder | LeftElbow | RightElbow | LeftWrist | RightWrist => "arms",
        Nose | LeftEye | RightEye => "head",
        Neck | Pelvis => "trunk",
        LeftHip | RightHip | LeftKnee | RightKnee | LeftAnkle | RightAnkle => "lower_body",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub name: String,
    pub share: f64,
}

/// Importance decomposed four ways plus by event. The joint, region and
/// event views leave out the handedness bit and are renormalized over the
/// remaining mass; when that mass is zero they are all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceAggregation {
    pub by_category: Vec<Share>,
    pub by_joint: Vec<Share>,
    pub by_region: Vec<Share>,
    pub by_event: Vec<Share>,
    pub attributable_mass: f64,
}

enum Parsed {
    Pose { event: usize, joint: JointId },
    Bio { event: usize, metric: String },
    Delta { transition: usize, metric: String },
    Meta,
}

fn parse_name(name: &str) -> Result<Parsed> {
    let bad = || EvalError::UnmappedFeature(name.to_string());
    let parts: Vec<&str> = name.split('.').collect();
    let event = |s: &str| EVENT_NAMES.iter().position(|e| *e == s);
    let metric_ok = |s: &str| METRIC_NAMES.contains(&s);
    match parts.as_slice() {
        ["pose", e, j, axis] if ["x", "y", "z"].contains(axis) => Ok(Parsed::Pose {
            event: event(e).ok_or_else(bad)?,
            joint: j.parse().map_err(|_| bad())?,
        }),
        ["bio", e, m] if metric_ok(m) => Ok(Parsed::Bio {
            event: event(e).ok_or_else(bad)?,
            metric: m.to_string(),
        }),
        ["delta", t, m] if metric_ok(m) => Ok(Parsed::Delta {
            transition: TRANSITION_NAMES.iter().position(|x| x == t).ok_or_else(bad)?,
            metric: m.to_string(),
        }),
        ["meta", "h_rhp"] => Ok(Parsed::Meta),
        _ => Err(bad()),
    }
}

fn shares(names: &[&str], values: &[f64], total: f64) -> Vec<Share> {
    names
        .iter()
        .zip(values)
        .map(|(n, v)| Share {
            name: n.to_string(),
            share: if total > 0.0 { v / total } else { 0.0 },
        })
        .collect()
}

pub fn aggregate_importance(
    imp: &[f64],
    names: &[String],
    table: &AttributionTable,
) -> Result<ImportanceAggregation> {
    if imp.len() != names.len() {
        return Err(EvalError::Length(imp.len(), names.len()));
    }
    let mut cat = [0.0; 4];
    let mut joint = [0.0; 17];
    let mut event = [0.0; 3];
    for (name, &v) in names.iter().zip(imp) {
        match parse_name(name)? {
            Parsed::Pose { event: e, joint: j } => {
                cat[0] += v;
                joint[j.ordinal()] += v;
                event[e] += v;
            }
            Parsed::Bio { event: e, metric } => {
                cat[1] += v;
                for (j, w) in table.joints_for(&metric)? {
                    joint[j.ordinal()] += v * w;
                }
                event[e] += v;
            }
            Parsed::Delta { transition: t, metric } => {
                cat[2] += v;
                for (j, w) in table.joints_for(&metric)? {
                    joint[j.ordinal()] += v * w;
                }
                event[t] += 0.5 * v;
                event[t + 1] += 0.5 * v;
            }
            Parsed::Meta => cat[3] += v,
        }
    }
    let total: f64 = cat.iter().sum();
    let attributable = total - cat[3];
    let mut region = [0.0; 4];
    for j in JointId::ALL {
        let r = REGIONS.iter().position(|r| *r == region_of(j)).unwrap_or(0);
        region[r] += joint[j.ordinal()];
    }
    let joint_names: Vec<&str> = JointId::ALL.iter().map(|j| j.name()).collect();
    Ok(ImportanceAggregation {
        by_category: shares(&CATEGORIES, &cat, total),
        by_joint: shares(&joint_names, &joint, attributable),
        by_region: shares(&REGIONS, &region, attributable),
        by_event: shares(&EVENT_NAMES, &event, attributable),
        attributable_mass: if total > 0.0 { attributable / total } else { 0.0 },
    })
}

/// Everything the `eval` stage reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: ClassificationReport,
    pub confusion: ConfusionMatrix,
    pub by_handedness: Vec<GroupAccuracy>,
    /// Absent when the model made no splits or its features are not the
    /// event-anchored set.
    pub importance: Option<ImportanceAggregation>,
    pub top_features: Vec<Share>,
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

impl EvaluationReport {
    /// Plain-text rendering of the report tables.
    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut o = String::new();
        let _ = writeln!(o, "config {} seed {}", self.config_hash, self.seed);
        let _ = writeln!(o, "train {} test {}", self.n_train, self.n_test);
        let _ = writeln!(o, "accuracy {:.4}", self.metrics.accuracy);
        let _ = writeln!(
            o,
            "macro precision {:.4} recall {:.4} f1 {:.4}\n",
            self.metrics.macro_precision, self.metrics.macro_recall, self.metrics.macro_f1
        );
        let _ = writeln!(o, "{:<6}{:>10}{:>10}{:>10}{:>9}", "class", "precision", "recall", "f1", "support");
        for m in &self.metrics.per_class {
            let _ = writeln!(
                o,
                "{:<6}{:>10.4}{:>10.4}{:>10.4}{:>9}",
                m.class, m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(o, "\nconfusion (rows: truth, row-normalized)");
        let _ = write!(o, "{:<6}", "");
        for c in &self.confusion.classes {
            let _ = write!(o, "{c:>7}");
        }
        let _ = writeln!(o);
        for (c, row) in self.confusion.classes.iter().zip(&self.confusion.normalized) {
            let _ = write!(o, "{c:<6}");
            match row.values() {
                Some(v) => v.iter().for_each(|x| {
                    let _ = write!(o, "{x:>7.3}");
                }),
                None => {
                    let _ = write!(o, "{:>7}", "n/a");
                }
            }
            let _ = writeln!(o);
        }
        let _ = writeln!(o, "\naccuracy by handedness");
        for g in &self.by_handedness {
            match g.accuracy {
                Some(a) => writeln!(o, "  {:<4}{:>7.4} (n={})", g.group, a, g.n),
                None => writeln!(o, "  {:<4}{:>7} (n=0)", g.group, "n/a"),
            }
            .ok();
        }
        if let Some(imp) = &self.importance {
            for (title, rows) in [
                ("category", &imp.by_category),
                ("region", &imp.by_region),
                ("event", &imp.by_event),
                ("joint", &imp.by_joint),
            ] {
                let _ = writeln!(o, "\nimportance by {title}");
                for s in rows {
                    let _ = writeln!(o, "  {:<16}{:>7.4}", s.name, s.share);
                }
            }
        }
        if !self.top_features.is_empty() {
            let _ = writeln!(o, "\ntop features");
            for s in &self.top_features {
                let _ = writeln!(o, "  {:<44}{:>7.4}", s.name, s.share);
            }
        }
        o
    }
}
