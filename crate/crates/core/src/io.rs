//! File formats: pose JSONL, feature CSV, detection JSONL.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{EventSet, HandednessReport};
use crate::pose::{PitchType, PoseError, PoseFrame, PoseSequence, Vec3, N_JOINTS};

pub const POSE_FORMAT_VERSION: u32 = 1;
pub const FEATURE_FORMAT_VERSION: u32 = 1;
pub const DETECT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Line {
        line: usize,
        episode_id: Option<String>,
        message: String,
    },
    #[error("feature file: {0}")]
    Features(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRecord {
    #[serde(default = "default_pose_version")]
    format_version: u32,
    episode_id: String,
    fps: f64,
    #[serde(default)]
    label: Option<String>,
    frames: Vec<Vec<[f64; 3]>>,
}

fn default_pose_version() -> u32 {
    POSE_FORMAT_VERSION
}

/// Why one pose line could not become a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub line: usize,
    pub episode_id: Option<String>,
    pub reason: String,
    pub message: String,
}

/// One parsed line of a pose file.
pub type PoseLine = Result<PoseSequence, Rejected>;

fn parse_pose_line(line_no: usize, text: &str) -> PoseLine {
    let reject = |id: Option<String>, reason: &str, message: String| Rejected {
        line: line_no,
        episode_id: id,
        reason: reason.to_string(),
        message,
    };
    let rec: PoseRecord = serde_json::from_str(text)
        .map_err(|e| reject(None, "malformed", e.to_string()))?;
    let id = Some(rec.episode_id.clone());
    if rec.format_version != POSE_FORMAT_VERSION {
        return Err(reject(
            id,
            "format_version",
            format!("unsupported pose format version {}", rec.format_version),
        ));
    }
    let label = match rec.label.as_deref() {
        None | Some("") => None,
        Some(code) => Some(
            code.parse::<PitchType>()
                .map_err(|e: PoseError| reject(id.clone(), e.reason_code(), e.to_string()))?,
        ),
    };
    let mut frames = Vec::with_capacity(rec.frames.len());
    for (t, f) in rec.frames.iter().enumerate() {
        if f.len() != N_JOINTS {
            let e = PoseError::JointCount { frame: t, found: f.len() };
            return Err(reject(id, e.reason_code(), e.to_string()));
        }
        let mut joints = [Vec3::zeros(); N_JOINTS];
        for (j, p) in f.iter().enumerate() {
            joints[j] = Vec3::new(p[0], p[1], p[2]);
        }
        frames.push(PoseFrame::new(joints));
    }
    PoseSequence::new(rec.episode_id, rec.fps, frames, label)
        .map_err(|e| reject(id, e.reason_code(), e.to_string()))
}

/// Reads every non-blank line; bad lines are returned as rejections so a
/// batch can continue.
pub fn read_pose_jsonl(reader: impl BufRead) -> Result<Vec<PoseLine>, IoError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_pose_line(i + 1, &line));
    }
    Ok(out)
}

pub fn write_pose_line(mut w: impl Write, seq: &PoseSequence) -> Result<(), IoError> {
    let rec = PoseRecord {
        format_version: POSE_FORMAT_VERSION,
        episode_id: seq.episode_id().to_string(),
        fps: seq.fps(),
        label: seq.label().map(|l| l.code().to_string()),
        frames: seq
            .frames()
            .iter()
            .map(|f| f.joints().iter().map(|p| [p.x, p.y, p.z]).collect())
            .collect(),
    };
    serde_json::to_writer(&mut w, &rec)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_pose_jsonl<'a>(
    mut w: impl Write,
    seqs: impl IntoIterator<Item = &'a PoseSequence>,
) -> Result<(), IoError> {
    for s in seqs {
        write_pose_line(&mut w, s)?;
    }
    Ok(())
}

/// Named feature rows with episode ids and optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub episode_ids: Vec<String>,
    pub labels: Vec<Option<PitchType>>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            names,
            episode_ids: Vec::new(),
            labels: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, id: String, label: Option<PitchType>, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.names.len());
        self.episode_ids.push(id);
        self.labels.push(label);
        self.rows.push(row);
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            episode_ids: self.episode_ids.clone(),
            labels: self.labels.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&i| r[i]).collect())
                .collect(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// CSV with a `#format_version=N` comment line, then a header of
    /// `episode_id`, `label` and the feature names.
    pub fn write_csv(&self, mut w: impl Write) -> Result<(), IoError> {
        writeln!(w, "#format_version={FEATURE_FORMAT_VERSION}")?;
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["episode_id".to_string(), "label".to_string()];
        header.extend(self.names.iter().cloned());
        csv.write_record(&header)?;
        for ((id, label), row) in self.episode_ids.iter().zip(&self.labels).zip(&self.rows) {
            let mut rec = vec![id.clone(), label.map(|l| l.code().to_string()).unwrap_or_default()];
            rec.extend(row.iter().map(|v| v.to_string()));
            csv.write_record(&rec)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv(mut r: impl BufRead) -> Result<FeatureTable, IoError> {
        let mut first = String::new();
        r.read_line(&mut first)?;
        let version = first
            .trim()
            .strip_prefix("#format_version=")
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| IoError::Features("missing #format_version line".into()))?;
        if version != FEATURE_FORMAT_VERSION {
            return Err(IoError::Features(format!("unsupported format version {version}")));
        }
        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = csv.headers()?.clone();
        if header.len() < 3 || &header[0] != "episode_id" || &header[1] != "label" {
            return Err(IoError::Features("header must start with episode_id,label".into()));
        }
        let mut table = FeatureTable::new(header.iter().skip(2).map(String::from).collect());
        for (i, rec) in csv.records().enumerate() {
            let rec = rec?;
            let row_err = |m: String| IoError::Features(format!("row {}: {m}", i + 1));
            let label = match &rec[1] {
                "" => None,
                code => Some(code.parse::<PitchType>().map_err(|e| row_err(e.to_string()))?),
            };
            let values = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|e| row_err(format!("{v:?}: {e}"))))
                .collect::<Result<Vec<f64>, IoError>>()?;
            table.push(rec[0].to_string(), label, values);
        }
        Ok(table)
    }
}

/// One line of `detect` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub format_version: u32,
    pub episode_id: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub handedness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta_ankle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_pelvis_rotation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub methods_agree: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fp: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rel: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
}

impl DetectionRecord {
    pub fn ok(episode_id: &str, report: &HandednessReport, ev: &EventSet) -> Self {
        Self {
            format_version: DETECT_FORMAT_VERSION,
            episode_id: episode_id.to_string(),
            status: "ok".into(),
            handedness: Some(report.handedness.code().to_string()),
            delta_ankle: Some(report.delta_ankle),
            mean_pelvis_rotation: Some(report.mean_pelvis_rotation),
            methods_agree: Some(report.methods_agree),
            fp: Some(ev.fp),
            mer: Some(ev.mer),
            rel: Some(ev.rel),
            failure_reason: None,
            message: None,
        }
    }

    pub fn skipped(episode_id: &str, reason: &str, message: &str) -> Self {
        Self {
            format_version: DETECT_FORMAT_VERSION,
            episode_id: episode_id.to_string(),
            status: "skipped".into(),
            handedness: None,
            delta_ankle: None,
            mean_pelvis_rotation: None,
            methods_agree: None,
            fp: None,
            mer: None,
            rel: None,
            failure_reason: Some(reason.to_string()),
            message: Some(message.to_string()),
        }
    }
}
