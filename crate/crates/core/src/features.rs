//! The 229-value feature vector: pelvis-centered pose at FP/MER/REL,
//! 15 biomechanical metrics per event, their deltas between consecutive
//! events, and a handedness bit.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventSet;
use crate::geometry::{angle_between, heading_xy, interior_angle, wrap_degrees, GeometryError};
use crate::pose::{Handedness, JointId, PoseFrame, PoseSequence, Vec3, N_JOINTS};

pub const EVENT_NAMES: [&str; 3] = ["FP", "MER", "REL"];
pub const TRANSITION_NAMES: [&str; 2] = ["FP_MER", "MER_REL"];
pub const AXES: [&str; 3] = ["x", "y", "z"];

pub const N_METRICS: usize = 15;
/// Metrics `0..N_ANGULAR` are angles in degrees; the rest are COG
/// coordinates.
pub const N_ANGULAR: usize = 12;
pub const POSE_LEN: usize = N_JOINTS * 3 * 3;
pub const BIOMECH_LEN: usize = N_METRICS * 3;
pub const DELTA_LEN: usize = N_METRICS * 2;
pub const FEATURE_LEN: usize = POSE_LEN + BIOMECH_LEN + DELTA_LEN + 1;

/// Per-event height proxies below this (feet) abort extraction.
pub const MIN_HEIGHT: f64 = 1e-6;

pub const METRIC_NAMES: [&str; N_METRICS] = [
    "lead_knee_flexion",
    "trail_knee_flexion",
    "throwing_elbow_flexion",
    "glove_elbow_flexion",
    "trunk_forward_tilt",
    "trunk_lateral_tilt",
    "trunk_rotation",
    "pelvis_rotation",
    "hip_shoulder_separation",
    "throwing_shoulder_abduction",
    "lead_shin_angle",
    "trail_shin_angle",
    "cog_x",
    "cog_y",
    "cog_z",
];

/// Segment weights of the coarse mass model used for the center of
/// gravity. They sum to one; the head joints carry no weight.
pub const COG_WEIGHTS: [(JointId, f64); 14] = [
    (JointId::Pelvis, 0.30),
    (JointId::LeftHip, 0.08),
    (JointId::RightHip, 0.08),
    (JointId::LeftShoulder, 0.07),
    (JointId::RightShoulder, 0.07),
    (JointId::LeftKnee, 0.06),
    (JointId::RightKnee, 0.06),
    (JointId::LeftElbow, 0.04),
    (JointId::RightElbow, 0.04),
    (JointId::LeftAnkle, 0.05),
    (JointId::RightAnkle, 0.05),
    (JointId::LeftWrist, 0.03),
    (JointId::RightWrist, 0.03),
    (JointId::Neck, 0.04),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("body height proxy {height:.3e} ft at frame {frame} is degenerate")]
    DegenerateHeight { frame: usize, height: f64 },
    #[error("metric {metric}: {source}")]
    Geometry {
        metric: &'static str,
        source: GeometryError,
    },
    #[error("event frame {frame} outside sequence of {len} frames")]
    EventOutOfRange { frame: usize, len: usize },
    #[error("cannot sample {k} frames from a sequence of {len}")]
    BadFrameCount { k: usize, len: usize },
}

impl FeatureError {
    pub fn reason_code(&self) -> &'static str {
        match self {
            FeatureError::DegenerateHeight { .. } => "degenerate_height",
            FeatureError::Geometry { .. } => "degenerate_geometry",
            FeatureError::EventOutOfRange { .. } => "event_out_of_range",
            FeatureError::BadFrameCount { .. } => "bad_frame_count",
        }
    }
}

/// The 15 metrics of one frame, in [`METRIC_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiomechMetrics(pub [f64; N_METRICS]);

impl BiomechMetrics {
    pub fn get(&self, name: &str) -> Option<f64> {
        METRIC_NAMES.iter().position(|m| *m == name).map(|i| self.0[i])
    }
}

/// Which blocks of the feature vector to use. Every set keeps the
/// handedness bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    PoseOnly,
    PoseBiomech,
    Full,
}

impl FeatureSet {
    /// Indices into the full 229-vector.
    pub fn indices(self) -> Vec<usize> {
        let meta = FEATURE_LEN - 1;
        let body = match self {
            FeatureSet::PoseOnly => POSE_LEN,
            FeatureSet::PoseBiomech => POSE_LEN + BIOMECH_LEN,
            FeatureSet::Full => POSE_LEN + BIOMECH_LEN + DELTA_LEN,
        };
        (0..body).chain(std::iter::once(meta)).collect()
    }

    pub fn len(self) -> usize {
        self.indices().len()
    }
}

fn height(frame: &PoseFrame, h: Handedness, t: usize) -> Result<f64, FeatureError> {
    let v = (frame[JointId::Nose] - frame[h.lead_side().ankle()]).norm();
    if v < MIN_HEIGHT {
        return Err(FeatureError::DegenerateHeight { frame: t, height: v });
    }
    Ok(v)
}

fn geo<T>(metric: &'static str, r: Result<T, GeometryError>) -> Result<T, FeatureError> {
    r.map_err(|source| FeatureError::Geometry { metric, source })
}

fn flexion(metric: &'static str, a: &Vec3, b: &Vec3, c: &Vec3) -> Result<f64, FeatureError> {
    Ok(180.0 - geo(metric, interior_angle(a, b, c))?)
}

pub fn compute_biomech(frame: &PoseFrame, h: Handedness) -> Result<BiomechMetrics, FeatureError> {
    use JointId::*;
    let lead = h.lead_side();
    let trail = h.trail_side();
    let throw = h.throwing_side();
    let glove = h.glove_side();
    let f = |j: JointId| frame[j];

    let lead_knee = flexion(METRIC_NAMES[0], &f(lead.hip()), &f(lead.knee()), &f(lead.ankle()))?;
    let trail_knee = flexion(METRIC_NAMES[1], &f(trail.hip()), &f(trail.knee()), &f(trail.ankle()))?;
    let throw_elbow = flexion(
        METRIC_NAMES[2],
        &f(throw.shoulder()),
        &f(throw.elbow()),
        &f(throw.wrist()),
    )?;
    let glove_elbow = flexion(
        METRIC_NAMES[3],
        &f(glove.shoulder()),
        &f(glove.elbow()),
        &f(glove.wrist()),
    )?;

    let mid_shoulder = (f(LeftShoulder) + f(RightShoulder)) * 0.5;
    let trunk = mid_shoulder - f(Pelvis);
    if trunk.norm() == 0.0 {
        return Err(FeatureError::Geometry {
            metric: METRIC_NAMES[4],
            source: GeometryError::ZeroVector,
        });
    }
    let forward_tilt = trunk.y.atan2(trunk.z).to_degrees();
    let lateral_tilt = h.sign() * trunk.x.atan2(trunk.z).to_degrees();
    let trunk_rotation = geo(METRIC_NAMES[6], heading_xy(&(f(LeftShoulder) - f(RightShoulder))))?;
    let pelvis_rotation = geo(METRIC_NAMES[7], heading_xy(&(f(LeftHip) - f(RightHip))))?;
    let separation = wrap_degrees(trunk_rotation - pelvis_rotation);
    let abduction = geo(
        METRIC_NAMES[9],
        angle_between(&(f(throw.elbow()) - f(throw.shoulder())), &-trunk),
    )?;
    let up = Vec3::z();
    let lead_shin = geo(METRIC_NAMES[10], angle_between(&(f(lead.knee()) - f(lead.ankle())), &up))?;
    let trail_shin = geo(METRIC_NAMES[11], angle_between(&(f(trail.knee()) - f(trail.ankle())), &up))?;

    let he = (f(Nose) - f(lead.ankle())).norm();
    if he < MIN_HEIGHT {
        return Err(FeatureError::DegenerateHeight { frame: 0, height: he });
    }
    let cog = COG_WEIGHTS
        .iter()
        .fold(Vec3::zeros(), |acc, &(j, w)| acc + f(j) * w);
    let cog = (cog - f(Pelvis)) / he;

    Ok(BiomechMetrics([
        lead_knee,
        trail_knee,
        throw_elbow,
        glove_elbow,
        forward_tilt,
        lateral_tilt,
        trunk_rotation,
        pelvis_rotation,
        separation,
        abduction,
        lead_shin,
        trail_shin,
        cog.x,
        cog.y,
        cog.z,
    ]))
}

fn check_events(seq: &PoseSequence, ev: &EventSet) -> Result<(), FeatureError> {
    for frame in ev.frames() {
        if frame >= seq.len() {
            return Err(FeatureError::EventOutOfRange {
                frame,
                len: seq.len(),
            });
        }
    }
    Ok(())
}

/// Pelvis-centered joints of one frame divided by that frame's height
/// proxy, in (joint, axis) order.
fn centered_pose(seq: &PoseSequence, t: usize, h: Handedness, out: &mut Vec<f64>) -> Result<(), FeatureError> {
    let frame = &seq.frames()[t];
    let he = height(frame, h, t)?;
    let pelvis = frame[JointId::Pelvis];
    for p in frame.joints() {
        let q = (p - pelvis) / he;
        out.extend_from_slice(&[q.x, q.y, q.z]);
    }
    Ok(())
}

pub fn raw_pose_features(
    seq: &PoseSequence,
    ev: &EventSet,
    h: Handedness,
) -> Result<Vec<f64>, FeatureError> {
    check_events(seq, ev)?;
    let mut out = Vec::with_capacity(POSE_LEN);
    for t in ev.frames() {
        centered_pose(seq, t, h, &mut out)?;
    }
    Ok(out)
}

pub fn biomech_features(
    seq: &PoseSequence,
    ev: &EventSet,
    h: Handedness,
) -> Result<Vec<f64>, FeatureError> {
    check_events(seq, ev)?;
    let mut out = Vec::with_capacity(BIOMECH_LEN);
    for t in ev.frames() {
        let m = compute_biomech(&seq.frames()[t], h).map_err(|e| match e {
            FeatureError::DegenerateHeight { height, .. } => {
                FeatureError::DegenerateHeight { frame: t, height }
            }
            other => other,
        })?;
        out.extend_from_slice(&m.0);
    }
    Ok(out)
}

/// (MER - FP) then (REL - MER) for each metric, angles wrapped.
pub fn temporal_deltas(b: &[f64]) -> Vec<f64> {
    assert_eq!(b.len(), BIOMECH_LEN, "biomech block must have {BIOMECH_LEN} values");
    let mut out = Vec::with_capacity(DELTA_LEN);
    for (from, to) in [(0, 1), (1, 2)] {
        for m in 0..N_METRICS {
            let d = b[to * N_METRICS + m] - b[from * N_METRICS + m];
            out.push(if m < N_ANGULAR { wrap_degrees(d) } else { d });
        }
    }
    out
}

fn h_bit(h: Handedness) -> f64 {
    match h {
        Handedness::Rhp => 1.0,
        Handedness::Lhp => 0.0,
    }
}

/// The full 229-value vector in [`feature_names`] order.
pub fn assemble(seq: &PoseSequence, ev: &EventSet, h: Handedness) -> Result<Vec<f64>, FeatureError> {
    let mut out = raw_pose_features(seq, ev, h)?;
    let bio = biomech_features(seq, ev, h)?;
    out.extend(temporal_deltas(&bio));
    // deltas come after the biomech block
    let deltas = out.split_off(POSE_LEN);
    out.extend(bio);
    out.extend(deltas);
    out.push(h_bit(h));
    debug_assert_eq!(out.len(), FEATURE_LEN);
    Ok(out)
}

/// Stable names of the 229 features.
pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut v = Vec::with_capacity(FEATURE_LEN);
        for e in EVENT_NAMES {
            for j in JointId::ALL {
                for a in AXES {
                    v.push(format!("pose.{e}.{}.{a}", j.name()));
                }
            }
        }
        for e in EVENT_NAMES {
            for m in METRIC_NAMES {
                v.push(format!("bio.{e}.{m}"));
            }
        }
        for tr in TRANSITION_NAMES {
            for m in METRIC_NAMES {
                v.push(format!("delta.{tr}.{m}"));
            }
        }
        v.push("meta.h_rhp".to_string());
        v
    })
}

/// Frames `round(i (T - 1) / (k - 1))` for `i in 0..k`.
pub fn uniform_frames(len: usize, k: usize) -> Result<Vec<usize>, FeatureError> {
    if k < 2 || k > len {
        return Err(FeatureError::BadFrameCount { k, len });
    }
    Ok((0..k)
        .map(|i| ((i * (len - 1)) as f64 / (k - 1) as f64).round() as usize)
        .collect())
}

/// Pose features at `k` evenly spaced frames plus the handedness bit.
pub fn uniform_sampling_features(
    seq: &PoseSequence,
    k: usize,
    h: Handedness,
) -> Result<Vec<f64>, FeatureError> {
    let frames = uniform_frames(seq.len(), k)?;
    let mut out = Vec::with_capacity(N_JOINTS * 3 * k + 1);
    for t in frames {
        centered_pose(seq, t, h, &mut out)?;
    }
    out.push(h_bit(h));
    Ok(out)
}

pub fn uniform_feature_names(k: usize) -> Vec<String> {
    let mut v = Vec::with_capacity(N_JOINTS * 3 * k + 1);
    for i in 0..k {
        for j in JointId::ALL {
            for a in AXES {
                v.push(format!("uniform.F{i}.{}.{a}", j.name()));
            }
        }
    }
    v.push("meta.h_rhp".to_string());
    v
}
