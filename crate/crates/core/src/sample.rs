//! One emotion-transition training example and its on-disk directory form.
//!
//! A sample directory holds `audio.wav`, `head.pose`, `tail.pose`,
//! `seed.pose` and `meta.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::emotion::{EmotionLabel, EmotionVocab};
use crate::error::{CoreError, Result};
use crate::layout::SegmentLayout;
use crate::pose::PoseSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmotionTransitionSample {
    pub sample_id: String,
    pub speaker_id: String,
    pub split: Split,
    pub audio: AudioClip,
    pub head_pose_gt: PoseSequence,
    pub tail_pose_gt: PoseSequence,
    pub head_emotion: EmotionLabel,
    pub tail_emotion: EmotionLabel,
    /// First `M` head frames, used as conditioning only.
    pub seed_poses: PoseSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sample_id: String,
    pub speaker_id: String,
    #[serde(default)]
    pub split: Split,
    pub head_emotion: EmotionLabel,
    pub tail_emotion: EmotionLabel,
    #[serde(default)]
    pub head_clip: Option<String>,
    #[serde(default)]
    pub tail_clip: Option<String>,
    #[serde(default)]
    pub transcript: Option<String>,
}

impl EmotionTransitionSample {
    /// Checks every structural invariant against a layout and vocabulary.
    ///
    /// `hop_secs` is the audio duration tolerance.
    pub fn validate(
        &self,
        layout: &SegmentLayout,
        vocab: &EmotionVocab,
        hop_secs: f64,
    ) -> Result<()> {
        let fail = |reason: String| CoreError::Sample {
            id: self.sample_id.clone(),
            reason,
        };
        vocab.check(&self.head_emotion).map_err(|e| fail(e.to_string()))?;
        vocab.check(&self.tail_emotion).map_err(|e| fail(e.to_string()))?;
        if !self.head_emotion.is_neutral() {
            return Err(fail(format!("head emotion is {}, not neutral", self.head_emotion.name)));
        }
        if self.tail_emotion.is_neutral() {
            return Err(fail("tail emotion must not be neutral".into()));
        }
        if self.head_pose_gt.frames() != layout.head_frames {
            return Err(fail(format!(
                "head has {} frames, layout wants {}",
                self.head_pose_gt.frames(),
                layout.head_frames
            )));
        }
        if self.tail_pose_gt.frames() != layout.tail_frames {
            return Err(fail(format!(
                "tail has {} frames, layout wants {}",
                self.tail_pose_gt.frames(),
                layout.tail_frames
            )));
        }
        let sk = self.head_pose_gt.skeleton();
        if self.tail_pose_gt.skeleton() != sk || self.seed_poses.skeleton() != sk {
            return Err(fail("head, tail and seed poses use different skeletons".into()));
        }
        if self.seed_poses.frames() > layout.head_frames {
            return Err(fail("more seed frames than head frames".into()));
        }
        let want = layout.duration_secs(sk.fps);
        let got = self.audio.duration_secs();
        if (got - want).abs() > hop_secs {
            return Err(fail(format!(
                "audio lasts {got:.4}s, layout needs {want:.4}s (tolerance {hop_secs:.4}s)"
            )));
        }
        Ok(())
    }

    pub fn meta(&self) -> SampleMeta {
        SampleMeta {
            sample_id: self.sample_id.clone(),
            speaker_id: self.speaker_id.clone(),
            split: self.split,
            head_emotion: self.head_emotion.clone(),
            tail_emotion: self.tail_emotion.clone(),
            head_clip: None,
            tail_clip: None,
            transcript: None,
        }
    }

    pub fn save_dir(&self, dir: &Path, meta: &SampleMeta) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
        self.audio.save_wav(&dir.join("audio.wav"))?;
        self.head_pose_gt.save(&dir.join("head.pose"))?;
        self.tail_pose_gt.save(&dir.join("tail.pose"))?;
        self.seed_poses.save(&dir.join("seed.pose"))?;
        let path = dir.join("meta.json");
        let json = serde_json::to_string_pretty(meta).expect("meta serializes");
        std::fs::write(&path, json).map_err(|e| CoreError::io(&path, e))
    }

    /// Loads a sample directory, resampling audio to `sample_rate`.
    pub fn load_dir(dir: &Path, sample_rate: u32) -> Result<(Self, SampleMeta)> {
        let path = dir.join("meta.json");
        let text = std::fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
        let meta: SampleMeta =
            serde_json::from_str(&text).map_err(|e| CoreError::format(&path, e.to_string()))?;
        let sample = Self {
            sample_id: meta.sample_id.clone(),
            speaker_id: meta.speaker_id.clone(),
            split: meta.split,
            audio: AudioClip::load_wav_at(&dir.join("audio.wav"), sample_rate)?,
            head_pose_gt: PoseSequence::load(&dir.join("head.pose"))?,
            tail_pose_gt: PoseSequence::load(&dir.join("tail.pose"))?,
            head_emotion: meta.head_emotion.clone(),
            tail_emotion: meta.tail_emotion.clone(),
            seed_poses: PoseSequence::load(&dir.join("seed.pose"))?,
        };
        Ok((sample, meta))
    }
}

/// Loads every sample directory under `samples_dir`, sorted by id.
pub fn load_samples(samples_dir: &Path, sample_rate: u32) -> Result<Vec<EmotionTransitionSample>> {
    let rd = std::fs::read_dir(samples_dir).map_err(|e| CoreError::io(samples_dir, e))?;
    let mut dirs = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| CoreError::io(samples_dir, e))?;
        if entry.path().join("meta.json").is_file() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    dirs.iter()
        .map(|d| EmotionTransitionSample::load_dir(d, sample_rate).map(|(s, _)| s))
        .collect()
}
