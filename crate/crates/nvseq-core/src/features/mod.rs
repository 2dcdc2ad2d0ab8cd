//! AU+POSE data model: per-frame features, sequences, normalization stats,
//! conversation samples, and windowing.

pub mod csv_io;
pub mod synth_data;

use crate::error::{Error, Result};

pub const NUM_AU: usize = 17;
pub const NUM_POSE: usize = 3;
pub const FRAME_DIM: usize = NUM_AU + NUM_POSE;

/// The 17 action-unit intensity channels, in CSV column order.
pub const AU_NAMES: [&str; NUM_AU] = [
    "AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10", "AU12", "AU14", "AU15",
    "AU17", "AU20", "AU23", "AU25", "AU26", "AU45",
];

pub const AU_MIN: f64 = 0.0;
pub const AU_MAX: f64 = 5.0;
pub const POSE_MIN: f64 = -std::f64::consts::FRAC_PI_2;
pub const POSE_MAX: f64 = std::f64::consts::FRAC_PI_2;

/// One frame: 17 action-unit intensities plus head rotation (rx, ry, rz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuPose {
    pub au: [f64; NUM_AU],
    pub pose: [f64; NUM_POSE],
}

impl AuPose {
    pub fn zero() -> Self {
        Self {
            au: [0.0; NUM_AU],
            pose: [0.0; NUM_POSE],
        }
    }

    pub fn from_vec20(v: &[f64]) -> Result<Self> {
        if v.len() != FRAME_DIM {
            return Err(Error::ShapeMismatch {
                context: "AuPose::from_vec20",
                left: vec![v.len()],
                right: vec![FRAME_DIM],
            });
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("AuPose::from_vec20"));
        }
        let mut au = [0.0; NUM_AU];
        au.copy_from_slice(&v[..NUM_AU]);
        let mut pose = [0.0; NUM_POSE];
        pose.copy_from_slice(&v[NUM_AU..]);
        Ok(Self { au, pose })
    }

    pub fn to_vec20(&self) -> [f64; FRAME_DIM] {
        let mut out = [0.0; FRAME_DIM];
        out[..NUM_AU].copy_from_slice(&self.au);
        out[NUM_AU..].copy_from_slice(&self.pose);
        out
    }

    /// Clamps every channel to its native range.
    pub fn clamp_native(&self) -> Self {
        let mut out = *self;
        for a in &mut out.au {
            *a = a.clamp(AU_MIN, AU_MAX);
        }
        for p in &mut out.pose {
            *p = p.clamp(POSE_MIN, POSE_MAX);
        }
        out
    }
}

/// Ordered frames with frame-rate metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct AuPoseSequence {
    frames: Vec<AuPose>,
    fps: f64,
}

impl AuPoseSequence {
    pub fn new(frames: Vec<AuPose>, fps: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Data("AuPoseSequence must be non-empty".into()));
        }
        if !(fps > 0.0) {
            return Err(Error::Data(format!("fps must be > 0, got {fps}")));
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[AuPose] {
        &self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// All maximal windows of exactly `len` frames at the given stride;
    /// shorter tails are dropped. May be empty.
    pub fn windows(&self, len: usize, stride: usize) -> Vec<&[AuPose]> {
        if len == 0 || stride == 0 || self.frames.len() < len {
            return Vec::new();
        }
        let count = (self.frames.len() - len) / stride + 1;
        (0..count)
            .map(|i| &self.frames[i * stride..i * stride + len])
            .collect()
    }
}

/// Per-dimension min/max over the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub min: [f64; FRAME_DIM],
    pub max: [f64; FRAME_DIM],
}

const DEGENERATE_RANGE: f64 = 1e-9;

impl NormStats {
    pub fn new(min: [f64; FRAME_DIM], max: [f64; FRAME_DIM]) -> Result<Self> {
        for i in 0..FRAME_DIM {
            if !(min[i].is_finite() && max[i].is_finite()) {
                return Err(Error::NonFinite("NormStats"));
            }
            if min[i] > max[i] {
                return Err(Error::Data(format!(
                    "NormStats dim {i}: min {} > max {}",
                    min[i], max[i]
                )));
            }
        }
        Ok(Self { min, max })
    }

    /// Computes stats over all frames of the given sequences.
    pub fn from_sequences<'a>(seqs: impl Iterator<Item = &'a AuPoseSequence>) -> Result<Self> {
        let mut min = [f64::INFINITY; FRAME_DIM];
        let mut max = [f64::NEG_INFINITY; FRAME_DIM];
        let mut any = false;
        for seq in seqs {
            for frame in seq.frames() {
                any = true;
                let v = frame.to_vec20();
                for i in 0..FRAME_DIM {
                    min[i] = min[i].min(v[i]);
                    max[i] = max[i].max(v[i]);
                }
            }
        }
        if !any {
            return Err(Error::Data("NormStats requires at least one frame".into()));
        }
        Self::new(min, max)
    }

    /// Full native ranges; used when data-derived stats are unavailable.
    pub fn native_ranges() -> Self {
        let mut min = [AU_MIN; FRAME_DIM];
        let mut max = [AU_MAX; FRAME_DIM];
        for i in NUM_AU..FRAME_DIM {
            min[i] = POSE_MIN;
            max[i] = POSE_MAX;
        }
        Self { min, max }
    }

    /// Maps each dimension into [0,1]; degenerate dimensions map to 0.5.
    pub fn normalize(&self, x: &AuPose) -> AuPose {
        let v = x.to_vec20();
        let mut out = [0.0; FRAME_DIM];
        for i in 0..FRAME_DIM {
            let range = self.max[i] - self.min[i];
            out[i] = if range < DEGENERATE_RANGE {
                0.5
            } else {
                (v[i] - self.min[i]) / range
            };
        }
        AuPose::from_vec20(&out).expect("normalize produced finite values")
    }

    pub fn denormalize(&self, x: &AuPose) -> AuPose {
        let v = x.to_vec20();
        let mut out = [0.0; FRAME_DIM];
        for i in 0..FRAME_DIM {
            let range = self.max[i] - self.min[i];
            out[i] = if range < DEGENERATE_RANGE {
                self.min[i]
            } else {
                v[i] * range + self.min[i]
            };
        }
        AuPose::from_vec20(&out).expect("denormalize produced finite values")
    }

    pub fn normalize_sequence(&self, seq: &AuPoseSequence) -> AuPoseSequence {
        let frames = seq.frames().iter().map(|f| self.normalize(f)).collect();
        AuPoseSequence::new(frames, seq.fps()).expect("normalized sequence valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split {other:?}"))),
        }
    }
}

/// Frame-aligned speaker/listener tracks plus the spoken sentence.
#[derive(Debug, Clone)]
pub struct ConversationSample {
    pub speaker_track: AuPoseSequence,
    pub listener_track: AuPoseSequence,
    pub transcript: Vec<String>,
    pub split: Split,
}

impl ConversationSample {
    pub fn new(
        speaker_track: AuPoseSequence,
        listener_track: AuPoseSequence,
        transcript: Vec<String>,
        split: Split,
    ) -> Result<Self> {
        if speaker_track.len() != listener_track.len() {
            return Err(Error::Data(format!(
                "speaker/listener frame counts differ: {} vs {}",
                speaker_track.len(),
                listener_track.len()
            )));
        }
        Ok(Self {
            speaker_track,
            listener_track,
            transcript,
            split,
        })
    }
}
