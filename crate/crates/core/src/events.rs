//! Handedness inference and localization of foot plant (FP), maximum
//! external rotation (MER) and ball release (REL).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{heading_xy, interior_angle, GeometryError};
use crate::pose::{Handedness, JointId, PoseSequence};
use crate::signal::{argmax_in_range, derivative, local_minima, savgol_smooth, SignalError};

/// Pelvis heading band (degrees) expected for right-handers.
pub const RHP_PELVIS_BAND: (f64, f64) = (-108.0, -76.0);
/// Pelvis heading band (degrees) expected for left-handers.
pub const LHP_PELVIS_BAND: (f64, f64) = (82.0, 94.0);

/// Detection thresholds. Distances in feet, velocities in feet per frame,
/// angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventConfig {
    pub ankle_height: f64,
    pub ankle_velocity: f64,
    pub release_angle: f64,
    pub release_gate: f64,
    pub window: usize,
    pub poly_order: usize,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            ankle_height: 0.95,
            ankle_velocity: -0.008,
            release_angle: 30.0,
            release_gate: 80.0,
            window: 21,
            poly_order: 3,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("no foot plant after knee peak at frame {knee_peak}; lowest lead ankle height {min_ankle_z:.3} ft")]
    FootPlantNotFound { knee_peak: usize, min_ankle_z: f64 },
    #[error("elbow flexion never exceeds the release gate; maximum {max_flexion:.1} deg")]
    ReleaseGateNotReached { max_flexion: f64 },
    #[error("elbow flexion never drops below the release threshold after frame {gate}; minimum {min_after_gate:.1} deg")]
    ReleaseNotFound { gate: usize, min_after_gate: f64 },
    #[error("event order violated: fp={fp}, mer={mer}, rel={rel}")]
    Order { fp: usize, mer: usize, rel: usize },
    #[error("geometry error at frame {frame}: {source}")]
    Geometry { frame: usize, source: GeometryError },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

impl EventError {
    pub fn reason_code(&self) -> &'static str {
        match self {
            EventError::FootPlantNotFound { .. } => "fp_not_found",
            EventError::ReleaseGateNotReached { .. } => "rel_gate_not_reached",
            EventError::ReleaseNotFound { .. } => "rel_not_found",
            EventError::Order { .. } => "event_order",
            EventError::Geometry { .. } => "degenerate_geometry",
            EventError::Signal(_) => "signal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandednessReport {
    pub handedness: Handedness,
    pub delta_ankle: f64,
    pub mean_pelvis_rotation: f64,
    pub methods_agree: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSet {
    pub fp: usize,
    pub mer: usize,
    pub rel: usize,
}

impl EventSet {
    pub fn frames(&self) -> [usize; 3] {
        [self.fp, self.mer, self.rel]
    }
}

fn in_band(v: f64, band: (f64, f64)) -> bool {
    band.0 <= v && v <= band.1
}

/// Sign of the mean left-minus-right ankle depth decides handedness; the
/// pelvis heading serves as a consistency check and breaks exact ties.
pub fn infer_handedness(seq: &PoseSequence) -> HandednessReport {
    let n = seq.len() as f64;
    let delta_ankle = seq
        .frames()
        .iter()
        .map(|f| f[JointId::LeftAnkle].y - f[JointId::RightAnkle].y)
        .sum::<f64>()
        / n;
    // frames where the hips coincide horizontally carry no heading
    let headings: Vec<f64> = seq
        .frames()
        .iter()
        .filter_map(|f| heading_xy(&(f[JointId::LeftHip] - f[JointId::RightHip])).ok())
        .collect();
    let mean_pelvis_rotation = if headings.is_empty() {
        f64::NAN
    } else {
        headings.iter().sum::<f64>() / headings.len() as f64
    };
    let handedness = if delta_ankle < 0.0 {
        Handedness::Rhp
    } else if delta_ankle > 0.0 {
        Handedness::Lhp
    } else if in_band(mean_pelvis_rotation, LHP_PELVIS_BAND) {
        Handedness::Lhp
    } else {
        Handedness::Rhp
    };
    let band = match handedness {
        Handedness::Rhp => RHP_PELVIS_BAND,
        Handedness::Lhp => LHP_PELVIS_BAND,
    };
    HandednessReport {
        handedness,
        delta_ankle,
        mean_pelvis_rotation,
        methods_agree: in_band(mean_pelvis_rotation, band),
    }
}

/// Raw (unsmoothed) throwing-arm elbow flexion per frame.
pub fn raw_elbow_flexion(seq: &PoseSequence, h: Handedness) -> Result<Vec<f64>, EventError> {
    let side = h.throwing_side();
    seq.frames()
        .iter()
        .enumerate()
        .map(|(t, f)| {
            interior_angle(&f[side.shoulder()], &f[side.elbow()], &f[side.wrist()])
                .map(|a| 180.0 - a)
                .map_err(|source| EventError::Geometry { frame: t, source })
        })
        .collect()
}

/// Smoothed throwing-arm elbow flexion in degrees.
pub fn elbow_flexion_series(
    seq: &PoseSequence,
    h: Handedness,
    cfg: &EventConfig,
) -> Result<Vec<f64>, EventError> {
    let raw = raw_elbow_flexion(seq, h)?;
    Ok(savgol_smooth(&raw, cfg.window, cfg.poly_order)?)
}

/// First frame after the lead-knee height peak where the smoothed lead
/// ankle is low and no longer falling quickly.
pub fn detect_foot_plant(
    seq: &PoseSequence,
    h: Handedness,
    cfg: &EventConfig,
) -> Result<usize, EventError> {
    let lead = h.lead_side();
    let knee: Vec<f64> = seq.joint_track(lead.knee()).map(|p| p.z).collect();
    let ankle: Vec<f64> = seq.joint_track(lead.ankle()).map(|p| p.z).collect();
    let knee = savgol_smooth(&knee, cfg.window, cfg.poly_order)?;
    let ankle = savgol_smooth(&ankle, cfg.window, cfg.poly_order)?;
    let vel = derivative(&ankle)?;
    let k = argmax_in_range(&knee, 0, knee.len() - 1)?;
    (k + 1..ankle.len())
        .find(|&t| ankle[t] < cfg.ankle_height && vel[t] > cfg.ankle_velocity)
        .ok_or_else(|| EventError::FootPlantNotFound {
            knee_peak: k,
            min_ankle_z: ankle[k..].iter().cloned().fold(f64::INFINITY, f64::min),
        })
}

/// First local minimum below the release threshold after the last frame
/// above the gate; falls back to the first sub-threshold frame when the
/// tail has no strict minimum.
pub fn detect_release(elbow: &[f64], cfg: &EventConfig) -> Result<usize, EventError> {
    let gate = elbow
        .iter()
        .rposition(|&v| v > cfg.release_gate)
        .ok_or_else(|| EventError::ReleaseGateNotReached {
            max_flexion: elbow.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })?;
    if let Some(t) = local_minima(elbow)
        .into_iter()
        .find(|&t| t > gate && elbow[t] < cfg.release_angle)
    {
        return Ok(t);
    }
    (gate + 1..elbow.len())
        .find(|&t| elbow[t] < cfg.release_angle)
        .ok_or_else(|| EventError::ReleaseNotFound {
            gate,
            min_after_gate: elbow[gate..].iter().cloned().fold(f64::INFINITY, f64::min),
        })
}

/// Frame of peak elbow flexion between FP and REL inclusive.
pub fn detect_mer(elbow: &[f64], fp: usize, rel: usize) -> Result<usize, EventError> {
    Ok(argmax_in_range(elbow, fp, rel)?)
}

pub fn detect_events(
    seq: &PoseSequence,
    cfg: &EventConfig,
) -> Result<(HandednessReport, EventSet), EventError> {
    let report = infer_handedness(seq);
    let h = report.handedness;
    let fp = detect_foot_plant(seq, h, cfg)?;
    let elbow = elbow_flexion_series(seq, h, cfg)?;
    let rel = detect_release(&elbow, cfg)?;
    if fp > rel {
        return Err(EventError::Order { fp, mer: fp, rel });
    }
    let mer = detect_mer(&elbow, fp, rel)?;
    Ok((report, EventSet { fp, mer, rel }))
}
