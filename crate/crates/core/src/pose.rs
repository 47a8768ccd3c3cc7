//! Pose sequence data model.
//!
//! Coordinates are in feet: `x` lateral, `y` along the mound-to-plate axis,
//! `z` vertical. Event thresholds downstream are expressed in the same unit,
//! so no conversion happens at ingest.

use std::fmt;
use std::ops::Index;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Episodes shorter than this are rejected at ingest.
pub const MIN_FRAMES: usize = 100;

pub const N_JOINTS: usize = 17;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("sequence has {frames} frames, minimum is {min}")]
    TooShort { frames: usize, min: usize },
    #[error("fps must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("non-finite coordinate at frame {frame}, joint {joint}")]
    NonFinite { frame: usize, joint: JointId },
    #[error("frame {frame} has {found} joints, expected {N_JOINTS}")]
    JointCount { frame: usize, found: usize },
    #[error("unknown joint name {0:?}")]
    UnknownJoint(String),
    #[error("unknown pitch type {0:?}")]
    UnknownPitchType(String),
    #[error("unknown handedness {0:?}")]
    UnknownHandedness(String),
}

impl PoseError {
    /// Short machine-readable reason used in batch reports.
    pub fn reason_code(&self) -> &'static str {
        match self {
            PoseError::TooShort { .. } => "too_short",
            PoseError::BadFps(_) => "bad_fps",
            PoseError::NonFinite { .. } => "non_finite",
            PoseError::JointCount { .. } => "joint_count",
            PoseError::UnknownJoint(_) => "unknown_joint",
            PoseError::UnknownPitchType(_) => "unknown_label",
            PoseError::UnknownHandedness(_) => "unknown_handedness",
        }
    }
}

macro_rules! joints {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// The 17 tracked joints, in file order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum JointId {
            $($variant),*
        }

        impl JointId {
            pub const ALL: [JointId; N_JOINTS] = [$(JointId::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(JointId::$variant => $name),*
                }
            }
        }
    };
}

joints! {
    Nose => "nose",
    Neck => "neck",
    LeftShoulder => "left_shoulder",
    RightShoulder => "right_shoulder",
    LeftElbow => "left_elbow",
    RightElbow => "right_elbow",
    LeftWrist => "left_wrist",
    RightWrist => "right_wrist",
    Pelvis => "pelvis",
    LeftHip => "left_hip",
    RightHip => "right_hip",
    LeftKnee => "left_knee",
    RightKnee => "right_knee",
    LeftAnkle => "left_ankle",
    RightAnkle => "right_ankle",
    LeftEye => "left_eye",
    RightEye => "right_eye",
}

impl JointId {
    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<JointId> {
        Self::ALL.get(i).copied()
    }

    /// The same joint on the other side of the body; midline joints map to
    /// themselves.
    pub fn mirror(self) -> JointId {
        use JointId::*;
        match self {
            LeftShoulder => RightShoulder,
            RightShoulder => LeftShoulder,
            LeftElbow => RightElbow,
            RightElbow => LeftElbow,
            LeftWrist => RightWrist,
            RightWrist => LeftWrist,
            LeftHip => RightHip,
            RightHip => LeftHip,
            LeftKnee => RightKnee,
            RightKnee => LeftKnee,
            LeftAnkle => RightAnkle,
            RightAnkle => LeftAnkle,
            LeftEye => RightEye,
            RightEye => LeftEye,
            other => other,
        }
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JointId {
    type Err = PoseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JointId::ALL
            .iter()
            .copied()
            .find(|j| j.name() == s)
            .ok_or_else(|| PoseError::UnknownJoint(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    fn pick(self, left: JointId, right: JointId) -> JointId {
        match self {
            Side::Left => left,
            Side::Right => right,
        }
    }

    pub fn shoulder(self) -> JointId {
        self.pick(JointId::LeftShoulder, JointId::RightShoulder)
    }
    pub fn elbow(self) -> JointId {
        self.pick(JointId::LeftElbow, JointId::RightElbow)
    }
    pub fn wrist(self) -> JointId {
        self.pick(JointId::LeftWrist, JointId::RightWrist)
    }
    pub fn hip(self) -> JointId {
        self.pick(JointId::LeftHip, JointId::RightHip)
    }
    pub fn knee(self) -> JointId {
        self.pick(JointId::LeftKnee, JointId::RightKnee)
    }
    pub fn ankle(self) -> JointId {
        self.pick(JointId::LeftAnkle, JointId::RightAnkle)
    }
}

/// Throwing hand of the pitcher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Handedness {
    #[serde(rename = "RHP")]
    Rhp,
    #[serde(rename = "LHP")]
    Lhp,
}

impl Handedness {
    /// Stride leg side.
    pub fn lead_side(self) -> Side {
        match self {
            Handedness::Rhp => Side::Left,
            Handedness::Lhp => Side::Right,
        }
    }

    pub fn trail_side(self) -> Side {
        self.lead_side().opposite()
    }

    pub fn throwing_side(self) -> Side {
        match self {
            Handedness::Rhp => Side::Right,
            Handedness::Lhp => Side::Left,
        }
    }

    pub fn glove_side(self) -> Side {
        self.throwing_side().opposite()
    }

    /// +1 for right-handers, -1 for left-handers.
    pub fn sign(self) -> f64 {
        match self {
            Handedness::Rhp => 1.0,
            Handedness::Lhp => -1.0,
        }
    }

    pub fn flipped(self) -> Handedness {
        match self {
            Handedness::Rhp => Handedness::Lhp,
            Handedness::Lhp => Handedness::Rhp,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Handedness::Rhp => "RHP",
            Handedness::Lhp => "LHP",
        }
    }
}

impl fmt::Display for Handedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Handedness {
    type Err = PoseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "RHP" => Ok(Handedness::Rhp),
            "LHP" => Ok(Handedness::Lhp),
            _ => Err(PoseError::UnknownHandedness(s.to_string())),
        }
    }
}

/// Pitch-type label codes, ordered by class frequency in the reference
/// distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PitchType {
    FF,
    FT,
    SL,
    CH,
    CB,
    SW,
    FC,
    SP,
}

impl PitchType {
    pub const ALL: [PitchType; 8] = [
        PitchType::FF,
        PitchType::FT,
        PitchType::SL,
        PitchType::CH,
        PitchType::CB,
        PitchType::SW,
        PitchType::FC,
        PitchType::SP,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<PitchType> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            PitchType::FF => "FF",
            PitchType::FT => "FT",
            PitchType::SL => "SL",
            PitchType::CH => "CH",
            PitchType::CB => "CB",
            PitchType::SW => "SW",
            PitchType::FC => "FC",
            PitchType::SP => "SP",
        }
    }

    pub fn codes() -> Vec<String> {
        Self::ALL.iter().map(|p| p.code().to_string()).collect()
    }
}

impl fmt::Display for PitchType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for PitchType {
    type Err = PoseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PitchType::ALL
            .iter()
            .copied()
            .find(|p| p.code() == s)
            .ok_or_else(|| PoseError::UnknownPitchType(s.to_string()))
    }
}

/// Joint positions of one frame, indexed by [`JointId`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseFrame {
    joints: [Vec3; N_JOINTS],
}

impl PoseFrame {
    pub fn new(joints: [Vec3; N_JOINTS]) -> Self {
        Self { joints }
    }

    pub fn from_fn(mut f: impl FnMut(JointId) -> Vec3) -> Self {
        Self {
            joints: JointId::ALL.map(&mut f),
        }
    }

    pub fn joints(&self) -> &[Vec3; N_JOINTS] {
        &self.joints
    }

    pub fn set(&mut self, j: JointId, p: Vec3) {
        self.joints[j.ordinal()] = p;
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Negate `x` and swap left/right joints.
    pub fn mirrored(&self) -> PoseFrame {
        PoseFrame::from_fn(|j| {
            let p = self[j.mirror()];
            Vec3::new(-p.x, p.y, p.z)
        })
    }

    pub fn map(&self, f: impl Fn(Vec3) -> Vec3) -> PoseFrame {
        PoseFrame {
            joints: self.joints.map(f),
        }
    }
}

impl Index<JointId> for PoseFrame {
    type Output = Vec3;

    fn index(&self, j: JointId) -> &Vec3 {
        &self.joints[j.ordinal()]
    }
}

/// One pitch episode. Construction enforces the ingest contract: positive
/// fps, at least [`MIN_FRAMES`] frames, finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    episode_id: String,
    fps: f64,
    frames: Vec<PoseFrame>,
    label: Option<PitchType>,
}

impl PoseSequence {
    pub fn new(
        episode_id: impl Into<String>,
        fps: f64,
        frames: Vec<PoseFrame>,
        label: Option<PitchType>,
    ) -> Result<Self, PoseError> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(PoseError::BadFps(fps));
        }
        if frames.len() < MIN_FRAMES {
            return Err(PoseError::TooShort {
                frames: frames.len(),
                min: MIN_FRAMES,
            });
        }
        for (t, f) in frames.iter().enumerate() {
            if let Some(j) = JointId::ALL
                .iter()
                .find(|&&j| f[j].iter().any(|v| !v.is_finite()))
            {
                return Err(PoseError::NonFinite { frame: t, joint: *j });
            }
        }
        Ok(Self {
            episode_id: episode_id.into(),
            fps,
            frames,
            label,
        })
    }

    pub fn episode_id(&self) -> &str {
        &self.episode_id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> &[PoseFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn label(&self) -> Option<PitchType> {
        self.label
    }

    /// Trajectory of one joint.
    pub fn joint_track(&self, j: JointId) -> impl Iterator<Item = Vec3> + '_ {
        self.frames.iter().map(move |f| f[j])
    }

    /// Applies `f` to every joint of every frame. Fails only if `f` produces
    /// non-finite coordinates.
    pub fn map_points(&self, f: impl Fn(Vec3) -> Vec3) -> Result<PoseSequence, PoseError> {
        PoseSequence::new(
            self.episode_id.clone(),
            self.fps,
            self.frames.iter().map(|fr| fr.map(&f)).collect(),
            self.label,
        )
    }

    /// Mirror image across the `x = 0` plane with left/right joints swapped.
    pub fn mirrored(&self) -> PoseSequence {
        PoseSequence {
            episode_id: self.episode_id.clone(),
            fps: self.fps,
            frames: self.frames.iter().map(PoseFrame::mirrored).collect(),
            label: self.label,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_frame() -> PoseFrame {
        PoseFrame::from_fn(|j| Vec3::new(j.ordinal() as f64, 0.0, 1.0))
    }

    #[test]
    fn joint_ordinals_are_a_bijection() {
        assert_eq!(JointId::ALL.len(), 17);
        for (i, j) in JointId::ALL.iter().enumerate() {
            assert_eq!(j.ordinal(), i);
            assert_eq!(JointId::from_ordinal(i), Some(*j));
        }
        assert_eq!(JointId::from_ordinal(17), None);
    }

    #[test]
    fn joint_names_round_trip() {
        for j in JointId::ALL {
            assert_eq!(j.name().parse::<JointId>().unwrap(), j);
            assert_eq!(j.to_string(), j.name());
        }
        assert!("left_toe".parse::<JointId>().is_err());
    }

    #[test]
    fn mirror_is_an_involution() {
        for j in JointId::ALL {
            assert_eq!(j.mirror().mirror(), j);
        }
        assert_eq!(JointId::LeftKnee.mirror(), JointId::RightKnee);
        assert_eq!(JointId::Pelvis.mirror(), JointId::Pelvis);
    }

    #[test]
    fn handedness_sides() {
        let r = Handedness::Rhp;
        assert_eq!(r.lead_side(), Side::Left);
        assert_eq!(r.throwing_side(), Side::Right);
        let l = Handedness::Lhp;
        assert_eq!(l.lead_side(), Side::Right);
        assert_eq!(l.throwing_side(), Side::Left);
        for h in [r, l] {
            assert_ne!(h.lead_side(), h.throwing_side());
            assert_eq!(h.trail_side(), h.throwing_side());
            assert_eq!(h.code().parse::<Handedness>().unwrap(), h);
        }
    }

    #[test]
    fn pitch_codes_round_trip() {
        for p in PitchType::ALL {
            assert_eq!(p.code().parse::<PitchType>().unwrap(), p);
        }
        assert!("KN".parse::<PitchType>().is_err());
    }

    #[test]
    fn short_sequences_are_rejected() {
        let err = PoseSequence::new("e", 30.0, vec![flat_frame(); 50], None).unwrap_err();
        assert_eq!(err, PoseError::TooShort { frames: 50, min: 100 });
        assert_eq!(err.reason_code(), "too_short");
        assert!(PoseSequence::new("e", 30.0, vec![flat_frame(); 100], None).is_ok());
    }

    #[test]
    fn bad_fps_and_nan_are_rejected() {
        assert!(matches!(
            PoseSequence::new("e", 0.0, vec![flat_frame(); 100], None),
            Err(PoseError::BadFps(_))
        ));
        let mut frames = vec![flat_frame(); 100];
        frames[42].set(JointId::RightWrist, Vec3::new(f64::NAN, 0.0, 0.0));
        assert_eq!(
            PoseSequence::new("e", 30.0, frames, None).unwrap_err(),
            PoseError::NonFinite { frame: 42, joint: JointId::RightWrist }
        );
    }

    #[test]
    fn mirroring_twice_is_identity() {
        let f = flat_frame();
        assert_eq!(f.mirrored().mirrored(), f);
        let m = f.mirrored();
        assert_eq!(m[JointId::LeftHip].x, -f[JointId::RightHip].x);
    }
}
