//! Synthetic pitch deliveries with known handedness, event frames and
//! class signatures.
//!
//! Every episode is built as a right-handed delivery on a fixed 6-ft body
//! (home plate toward -y, chest initially facing -x) and mirrored for
//! left-handers after noise is added, so a left-handed episode is the exact
//! mirror image of the right-handed one drawn from the same seed.
//!
//! Five class signatures are injected as localized offsets around the event
//! frames:
//!
//! | dim | what moves                                   | when        |
//! |-----|----------------------------------------------|-------------|
//! | 0   | trunk lateral tilt change                    | FP -> REL   |
//! | 1   | forearm rotation about the upper arm (wrist) | around MER  |
//! | 2   | head (nose, eyes) sideways offset            | around REL  |
//! | 3   | throwing-elbow flexion                       | around FP   |
//! | 4   | pelvis joint shift, moving the COG           | around REL  |

use nalgebra::{Rotation3, Unit};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventSet;
use crate::pose::{Handedness, JointId, PitchType, PoseFrame, PoseSequence, Vec3};

/// Share of each pitch type in the reference distribution, in
/// [`PitchType::ALL`] order.
pub const REFERENCE_CLASS_SHARES: [f64; 8] = [0.323, 0.155, 0.136, 0.102, 0.087, 0.086, 0.081, 0.030];
pub const REFERENCE_RHP_SHARE: f64 = 0.69;

/// Frames between the lead foot touching down and the frame the plant rule
/// fires on the noise-free ankle trajectory; the truth FP is placed there.
pub const PLANT_LAG: usize = 5;

/// Shortest episode the delivery timeline fits into.
pub const MIN_SYNTH_FRAMES: usize = 143;

/// Signature amplitudes at `signature_scale = 1`.
pub const TILT_AMPLITUDE_DEG: f64 = 6.0;
pub const FOREARM_AMPLITUDE_DEG: f64 = 25.0;
pub const HEAD_AMPLITUDE_FT: f64 = 0.25;
pub const ELBOW_AMPLITUDE_DEG: f64 = 15.0;
pub const COG_AMPLITUDE_FT: f64 = 0.3;

const ANKLE_HEIGHT: f64 = 0.25;
const THIGH: f64 = 1.5;
const SHIN: f64 = 1.5;
const HIP_HALF_WIDTH: f64 = 0.45;
const TRUNK: f64 = 1.65;
const SHOULDER_HALF_WIDTH: f64 = 0.6;
const NECK: f64 = 0.3;
const UPPER_ARM: f64 = 1.0;
const FOREARM: f64 = 0.9;
/// Half-width in frames of the raised-cosine signature bumps.
const BUMP: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_episodes: usize,
    /// Class shares in [`PitchType::ALL`] order.
    pub class_distribution: Vec<f64>,
    pub handedness_ratio: f64,
    pub fps: f64,
    pub min_frames: usize,
    pub max_frames: usize,
    pub noise_std: f64,
    pub signature_scale: f64,
    pub twin_classes: Option<[PitchType; 2]>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_episodes: 1000,
            class_distribution: REFERENCE_CLASS_SHARES.to_vec(),
            handedness_ratio: REFERENCE_RHP_SHARE,
            fps: 30.0,
            min_frames: 150,
            max_frames: 220,
            noise_std: 0.02,
            signature_scale: 1.0,
            twin_classes: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.class_distribution.len() != PitchType::ALL.len() {
            return bad(format!(
                "class_distribution needs {} entries, got {}",
                PitchType::ALL.len(),
                self.class_distribution.len()
            ));
        }
        if self.class_distribution.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("class shares must be finite and non-negative".into());
        }
        let total: f64 = self.class_distribution.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return bad(format!("class shares sum to {total}, expected 1"));
        }
        if !(0.0..=1.0).contains(&self.handedness_ratio) {
            return bad(format!("handedness_ratio {} outside [0, 1]", self.handedness_ratio));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.min_frames < MIN_SYNTH_FRAMES || self.min_frames > self.max_frames {
            return bad(format!(
                "frame range {}..={} must satisfy {MIN_SYNTH_FRAMES} <= min <= max",
                self.min_frames, self.max_frames
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if !(self.signature_scale >= 0.0 && self.signature_scale.is_finite()) {
            return bad(format!("signature_scale must be >= 0, got {}", self.signature_scale));
        }
        if let Some([a, b]) = self.twin_classes {
            if a == b {
                return bad("twin classes must differ".into());
            }
        }
        Ok(())
    }

    /// Ternary signature code used for `label`, honoring the twin pair.
    pub fn effective_code(&self, label: PitchType) -> [i8; 5] {
        match self.twin_classes {
            Some([a, b]) if label == b => signature_code(a),
            _ => signature_code(label),
        }
    }
}

/// Per-class direction of each of the five signature dimensions.
pub fn signature_code(p: PitchType) -> [i8; 5] {
    match p {
        PitchType::FF => [0, 0, 0, 0, 0],
        PitchType::FT => [1, 1, 0, 0, 0],
        PitchType::SL => [-1, 0, 1, 0, 0],
        PitchType::CH => [0, -1, 0, 1, 0],
        PitchType::CB => [0, 0, -1, 0, 1],
        PitchType::SW => [1, 0, 0, -1, 0],
        PitchType::FC => [0, 1, 0, 0, -1],
        PitchType::SP => [-1, 0, 0, 1, 1],
    }
}

/// Whether a feature name belongs to a family that carries a signature:
/// trunk lateral tilt, throwing-elbow flexion and COG metrics, wrist
/// coordinates, and head coordinates at release.
pub fn is_signature_feature(name: &str) -> bool {
    const METRICS: [&str; 3] = ["trunk_lateral_tilt", "throwing_elbow_flexion", "cog_"];
    let parts: Vec<&str> = name.split('.').collect();
    match parts.as_slice() {
        ["bio" | "delta", _, m] => METRICS.iter().any(|k| m.starts_with(k)),
        ["pose", e, j, _] => {
            j.ends_with("_wrist") || (*e == "REL" && (*j == "nose" || j.ends_with("_eye")))
        }
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthEpisode {
    pub sequence: PoseSequence,
    pub truth_handedness: Handedness,
    pub truth_events: EventSet,
    pub truth_label: PitchType,
}

fn smoothstep(t: f64, t0: f64, t1: f64) -> f64 {
    if t <= t0 {
        0.0
    } else if t >= t1 {
        1.0
    } else {
        let u = (t - t0) / (t1 - t0);
        u * u * (3.0 - 2.0 * u)
    }
}

fn bump(t: f64, center: f64) -> f64 {
    let d = (t - center).abs();
    if d >= BUMP {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * d / BUMP).cos())
    }
}

/// Smooth (C1) interpolation through keyframes, held flat outside them.
fn keyed(t: f64, keys: &[(f64, f64)]) -> f64 {
    let first = keys[0];
    if t <= first.0 {
        return first.1;
    }
    for w in keys.windows(2) {
        let ((t0, v0), (t1, v1)) = (w[0], w[1]);
        if t <= t1 {
            return v0 + (v1 - v0) * smoothstep(t, t0, t1);
        }
    }
    keys[keys.len() - 1].1
}

/// Piecewise-linear interpolation through knots.
fn linear(t: f64, knots: &[(f64, f64)]) -> f64 {
    if t <= knots[0].0 {
        return knots[0].1;
    }
    for w in knots.windows(2) {
        let ((t0, v0), (t1, v1)) = (w[0], w[1]);
        if t <= t1 {
            return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
        }
    }
    knots[knots.len() - 1].1
}

fn horizontal(deg: f64) -> Vec3 {
    let r = deg.to_radians();
    Vec3::new(r.cos(), r.sin(), 0.0)
}

/// Unit component of `v` orthogonal to unit `u`.
fn orthogonal(v: &Vec3, u: &Vec3) -> Vec3 {
    (v - u * v.dot(u)).normalize()
}

/// Two-segment limb from `root` to `end` bending toward `pole`.
fn solve_knee(hip: &Vec3, ankle: &Vec3, pole: &Vec3) -> Vec3 {
    let span = ankle - hip;
    let reach = THIGH + SHIN - 1e-6;
    let d = span.norm().clamp(1e-6, reach);
    let e = span.normalize();
    let q = orthogonal(pole, &e);
    let cos_a = ((THIGH * THIGH + d * d - SHIN * SHIN) / (2.0 * THIGH * d)).clamp(-1.0, 1.0);
    hip + (e * cos_a + q * (1.0 - cos_a * cos_a).sqrt()) * THIGH
}

/// Arm from `shoulder`: upper-arm direction `u`, forearm bent by
/// `flexion` degrees toward `v` (unit, orthogonal to `u`).
fn arm(shoulder: &Vec3, u: &Vec3, v: &Vec3, flexion: f64, scale: (f64, f64)) -> (Vec3, Vec3) {
    let elbow = shoulder + u * (UPPER_ARM * scale.0);
    let f = flexion.to_radians();
    let wrist = elbow + (u * f.cos() + v * f.sin()) * (FOREARM * scale.1);
    (elbow, wrist)
}

/// All per-episode random quantities, drawn in a fixed order.
struct Script {
    len: usize,
    fp: f64,
    mer: f64,
    rel: f64,
    contact: f64,
    lift_top: f64,
    lift_start: f64,
    lift_height: f64,
    stride: f64,
    pelvis_heading: f64,
    pelvis_open: f64,
    pelvis_drop: f64,
    trunk_turn_mer: f64,
    trunk_turn_rel: f64,
    tilt_mer: f64,
    tilt_rel: f64,
    lateral_base: f64,
    lateral_drift: f64,
    slot: f64,
    swing: f64,
    forearm_roll: f64,
    glove_flexion: f64,
    arm_scale: (f64, f64),
    pelvis_offset: f64,
    elbow_knots: Vec<(f64, f64)>,
    sig: [f64; 5],
}

impl Script {
    fn draw(rng: &mut ChaCha8Rng, code: [i8; 5], cfg: &SynthConfig) -> Script {
        let len = rng.random_range(cfg.min_frames..=cfg.max_frames);
        let d1 = rng.random_range(14..=22usize);
        let d2 = rng.random_range(26..=32usize);
        let fp = rng.random_range(55..=len - 34 - d1 - d2);
        let mer = fp + d1;
        let rel = mer + d2;
        let descent = rng.random_range(8..=20usize);
        let contact = fp - PLANT_LAG;
        let lift_top = contact - descent;
        let lift_start = lift_top - 18;

        let base = rng.random_range(50.0..65.0);
        let peak = rng.random_range(100.0..115.0);
        let low = rng.random_range(10.0..18.0);
        let follow = rng.random_range(45.0..60.0);
        let (s1, s2) = (2.5, 4.5);
        let (m, r) = (mer as f64, rel as f64);
        let elbow_knots = vec![
            (0.0, base),
            (m - 30.0, base),
            (m - 12.0, peak - 12.0 * s1),
            (m, peak),
            (m + 12.0, peak - 12.0 * s1),
            (r - 12.0, low + 12.0 * s2),
            (r, low),
            (r + 12.0, low + 12.0 * s2),
            (r + 30.0, follow),
            ((len - 1) as f64, follow),
        ];

        let s = cfg.signature_scale;
        let amp = [
            TILT_AMPLITUDE_DEG,
            FOREARM_AMPLITUDE_DEG,
            HEAD_AMPLITUDE_FT,
            ELBOW_AMPLITUDE_DEG,
            COG_AMPLITUDE_FT,
        ];
        let mut sig = [0.0; 5];
        for i in 0..5 {
            sig[i] = f64::from(code[i]) * amp[i] * s;
        }

        Script {
            len,
            fp: fp as f64,
            mer: m,
            rel: r,
            contact: contact as f64,
            lift_top: lift_top as f64,
            lift_start: lift_start as f64,
            lift_height: rng.random_range(1.8..2.1),
            stride: rng.random_range(3.2..3.6),
            pelvis_heading: rng.random_range(-91.0..-86.0),
            pelvis_open: rng.random_range(0.0..3.0),
            pelvis_drop: rng.random_range(2.45..2.6),
            trunk_turn_mer: rng.random_range(20.0..35.0),
            trunk_turn_rel: rng.random_range(50.0..70.0),
            tilt_mer: rng.random_range(15.0..25.0),
            tilt_rel: rng.random_range(28.0..40.0),
            lateral_base: rng.random_range(-25.0..25.0),
            lateral_drift: rng.random_range(-2.0..2.0),
            slot: rng.random_range(-15.0..15.0),
            swing: rng.random_range(-18.0..18.0),
            forearm_roll: rng.random_range(-10.0..10.0),
            glove_flexion: rng.random_range(-10.0..10.0),
            arm_scale: (rng.random_range(0.88..1.12), rng.random_range(0.88..1.12)),
            pelvis_offset: rng.random_range(-0.6..0.6),
            elbow_knots,
            sig,
        }
    }

    fn events(&self) -> EventSet {
        EventSet {
            fp: self.fp as usize,
            mer: self.mer as usize,
            rel: self.rel as usize,
        }
    }

    /// Noise-free right-handed pose at frame `t`.
    fn frame(&self, t: f64) -> PoseFrame {
        use JointId::*;
        let (fp, mer, rel) = (self.fp, self.mer, self.rel);
        let end = (self.len - 1) as f64;

        // lower body
        let pelvis = Vec3::new(
            0.0,
            keyed(t, &[(self.lift_top - 4.0, 0.0), (fp, -0.5 * self.stride), (rel + 10.0, -0.62 * self.stride)]),
            keyed(
                t,
                &[(self.lift_start, 3.05), (self.lift_top, 3.1), (fp, self.pelvis_drop), (rel, self.pelvis_drop - 0.05), (rel + 25.0, self.pelvis_drop + 0.1)],
            ),
        );
        let pelvis_heading = self.pelvis_heading + self.pelvis_open * smoothstep(t, fp, rel);
        let hip_axis = horizontal(pelvis_heading);
        let facing = hip_axis.cross(&Vec3::z());
        let left_hip = pelvis + hip_axis * HIP_HALF_WIDTH;
        let right_hip = pelvis - hip_axis * HIP_HALF_WIDTH;

        let lead_z = if t < self.lift_start {
            ANKLE_HEIGHT
        } else if t < self.lift_top {
            let u = (t - self.lift_start) / (self.lift_top - self.lift_start);
            ANKLE_HEIGHT + (self.lift_height - ANKLE_HEIGHT) * 0.5 * (1.0 - (std::f64::consts::PI * u).cos())
        } else if t < self.contact {
            let u = (t - self.lift_top) / (self.contact - self.lift_top);
            self.lift_height + (ANKLE_HEIGHT - self.lift_height) * u
        } else {
            ANKLE_HEIGHT
        };
        let left_ankle = Vec3::new(
            -0.1,
            -HIP_HALF_WIDTH - self.stride * smoothstep(t, self.lift_top - 6.0, self.contact),
            lead_z,
        );
        let right_ankle = Vec3::new(
            0.1,
            HIP_HALF_WIDTH - 0.25 * smoothstep(t, fp, rel) - (0.75 * self.stride + 0.2) * smoothstep(t, rel, rel + 26.0),
            ANKLE_HEIGHT + 0.2 * smoothstep(t, fp, rel) + 0.7 * bump(t, rel + 14.0),
        );
        let left_knee = solve_knee(&left_hip, &left_ankle, &facing);
        let right_knee = solve_knee(&right_hip, &right_ankle, &facing);

        // trunk
        let forward = keyed(t, &[(0.0, 8.0), (fp, 12.0), (mer, self.tilt_mer), (rel, self.tilt_rel), (rel + 20.0, self.tilt_rel + 12.0)]);
        let tilt_window = smoothstep(t, fp, mer) - smoothstep(t, rel, rel + 15.0);
        let lateral = self.lateral_base + self.lateral_drift * smoothstep(t, fp, mer) + self.sig[0] * tilt_window;
        let up = Vec3::new(lateral.to_radians().tan(), -forward.to_radians().tan(), 1.0).normalize();
        let mid = pelvis + up * TRUNK;
        let h0 = self.pelvis_heading;
        let trunk_heading = keyed(
            t,
            &[(0.0, h0 - 6.0), (fp, h0 - 4.0), (mer, h0 + self.trunk_turn_mer), (rel, h0 + self.trunk_turn_rel), (rel + 25.0, h0 + 80.0)],
        );
        let across = orthogonal(&horizontal(trunk_heading), &up);
        let chest = across.cross(&up);
        let left_shoulder = mid + across * SHOULDER_HALF_WIDTH;
        let right_shoulder = mid - across * SHOULDER_HALF_WIDTH;
        let neck = mid + up * NECK;
        let head_shift = Vec3::x() * (self.sig[2] * bump(t, rel));
        let nose = mid + up * 0.75 + chest * 0.3 + head_shift;
        let eye_c = mid + up * 0.85 + chest * 0.22 + head_shift;
        let left_eye = eye_c + across * 0.12;
        let right_eye = eye_c - across * 0.12;

        // throwing arm
        let abd = keyed(t, &[(0.0, 25.0), (self.lift_top, 40.0), (fp, 80.0 + self.slot), (mer, 90.0 + self.slot), (rel, 95.0 + self.slot), (rel + 25.0, 60.0)]);
        let swing = keyed(t, &[(0.0, 80.0), (self.lift_top, 40.0), (fp, -20.0 + self.swing), (mer, 5.0 + self.swing), (rel, 60.0 + self.swing), (rel + 25.0, 130.0)]);
        let (a, s) = (abd.to_radians(), swing.to_radians());
        let u = -up * a.cos() + (-across * s.cos() + chest * s.sin()) * a.sin();
        let roll = (self.forearm_roll + self.sig[1] * bump(t, mer)).to_radians();
        let v0 = orthogonal(&up, &u);
        let v = Rotation3::from_axis_angle(&Unit::new_normalize(u), roll) * v0;
        let flexion = linear(t, &self.elbow_knots) + self.sig[3] * bump(t, fp);
        let (right_elbow, right_wrist) = arm(&right_shoulder, &u, &v, flexion, self.arm_scale);

        // glove arm
        let gabd = keyed(t, &[(0.0, 25.0), (self.lift_top, 50.0), (fp, 85.0), (rel, 55.0), (rel + 25.0, 40.0)]);
        let gswing = keyed(t, &[(0.0, 100.0), (fp, 10.0), (rel, 70.0), (rel + 25.0, 100.0)]);
        let (ga, gs) = (gabd.to_radians(), gswing.to_radians());
        let gu = -up * ga.cos() + (across * gs.cos() + chest * gs.sin()) * ga.sin();
        let gv = orthogonal(&up, &gu);
        let gflex = keyed(t, &[(0.0, 70.0), (fp, 35.0), (rel, 95.0), (end.max(rel + 25.0), 110.0)]) + self.glove_flexion;
        let (left_elbow, left_wrist) = arm(&left_shoulder, &gu, &gv, gflex, self.arm_scale);

        let pelvis_joint = pelvis + Vec3::y() * (self.pelvis_offset + self.sig[4] * bump(t, rel));

        PoseFrame::from_fn(|j| match j {
            Nose => nose,
            Neck => neck,
            LeftShoulder => left_shoulder,
            RightShoulder => right_shoulder,
            LeftElbow => left_elbow,
            RightElbow => right_elbow,
            LeftWrist => left_wrist,
            RightWrist => right_wrist,
            Pelvis => pelvis_joint,
            LeftHip => left_hip,
            RightHip => right_hip,
            LeftKnee => left_knee,
            RightKnee => right_knee,
            LeftAnkle => left_ankle,
            RightAnkle => right_ankle,
            LeftEye => left_eye,
            RightEye => right_eye,
        })
    }
}

/// One episode from its own seed. Identical seeds with opposite handedness
/// produce mirror images.
pub fn generate_episode(
    episode_id: &str,
    label: PitchType,
    handedness: Handedness,
    cfg: &SynthConfig,
    seed: u64,
) -> SynthEpisode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let script = Script::draw(&mut rng, cfg.effective_code(label), cfg);
    let noise = Normal::new(0.0, cfg.noise_std).expect("noise_std validated as finite and >= 0");
    let frames: Vec<PoseFrame> = (0..script.len)
        .map(|t| {
            let clean = script.frame(t as f64);
            let noisy = if cfg.noise_std > 0.0 {
                PoseFrame::from_fn(|j| {
                    clean[j] + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
                })
            } else {
                clean
            };
            match handedness {
                Handedness::Rhp => noisy,
                Handedness::Lhp => noisy.mirrored(),
            }
        })
        .collect();
    let sequence = PoseSequence::new(episode_id, cfg.fps, frames, Some(label))
        .expect("generator produces valid sequences");
    SynthEpisode {
        sequence,
        truth_handedness: handedness,
        truth_events: script.events(),
        truth_label: label,
    }
}

/// Per-class episode counts by largest remainder.
pub fn class_counts(cfg: &SynthConfig) -> Vec<usize> {
    allocate_quota(&cfg.class_distribution, cfg.n_episodes)
}

/// Largest-remainder apportionment of `n` items over `shares` (lower
/// index wins ties).
fn allocate_quota(shares: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|p| p / total * n as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| (e + 1e-9).floor() as usize).collect();
    let assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - quota[a] as f64;
        let rb = exact[b] - quota[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().take(n.saturating_sub(assigned)) {
        quota[c] += 1;
    }
    quota
}

/// Labels, handedness and per-episode seeds for a dataset, in episode
/// order.
pub fn dataset_plan(cfg: &SynthConfig) -> Result<Vec<(PitchType, Handedness, u64)>, SynthError> {
    cfg.validate()?;
    let n = cfg.n_episodes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labels: Vec<PitchType> = class_counts(cfg)
        .into_iter()
        .zip(PitchType::ALL)
        .flat_map(|(c, p)| std::iter::repeat_n(p, c))
        .collect();
    labels.shuffle(&mut rng);
    let n_rhp = (cfg.handedness_ratio * n as f64).round() as usize;
    let mut hands: Vec<Handedness> = (0..n)
        .map(|i| if i < n_rhp { Handedness::Rhp } else { Handedness::Lhp })
        .collect();
    hands.shuffle(&mut rng);
    Ok(labels
        .into_iter()
        .zip(hands)
        .map(|(l, h)| (l, h, rng.next_u64()))
        .collect())
}

pub fn episode_id(seed: u64, index: usize) -> String {
    format!("syn-{seed}-{index:06}")
}

pub fn generate_dataset(cfg: &SynthConfig) -> Result<Vec<SynthEpisode>, SynthError> {
    let plan = dataset_plan(cfg)?;
    Ok(plan
        .into_par_iter()
        .enumerate()
        .map(|(i, (label, hand, seed))| generate_episode(&episode_id(cfg.seed, i), label, hand, cfg, seed))
        .collect())
}

/// Ground truth of one episode as written to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub episode_id: String,
    pub label: PitchType,
    pub handedness: Handedness,
    pub fp: usize,
    pub mer: usize,
    pub rel: usize,
}

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub format_version: u32,
    pub config: SynthConfig,
    pub episodes: Vec<TruthRecord>,
}

impl TruthManifest {
    pub fn new(cfg: &SynthConfig, episodes: &[SynthEpisode]) -> Self {
        Self {
            format_version: MANIFEST_FORMAT_VERSION,
            config: cfg.clone(),
            episodes: episodes
                .iter()
                .map(|e| TruthRecord {
                    episode_id: e.sequence.episode_id().to_string(),
                    label: e.truth_label,
                    handedness: e.truth_handedness,
                    fp: e.truth_events.fp,
                    mer: e.truth_events.mer,
                    rel: e.truth_events.rel,
                })
                .collect(),
        }
    }
}
