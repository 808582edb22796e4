//! Single-emotion source clips and their extraction from long labelled tracks.

use std::path::Path;

use emogest_core::{AudioClip, EmotionLabel, PoseSequence};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

pub const CLIP_FRAMES: usize = 60;
pub const CLIP_STRIDE: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceClip {
    pub clip_id: String,
    pub speaker_id: String,
    pub emotion: EmotionLabel,
    pub poses: PoseSequence,
    pub audio: AudioClip,
    pub transcript: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClipMeta {
    clip_id: String,
    speaker_id: String,
    emotion: EmotionLabel,
    transcript: Option<String>,
}

impl SourceClip {
    /// Checks the frame count against the audio duration.
    pub fn validate(&self, frames: usize) -> Result<()> {
        if self.poses.frames() != frames {
            return Err(DataError::Invalid(format!(
                "clip {} has {} frames, expected {frames}",
                self.clip_id,
                self.poses.frames()
            )));
        }
        let want = frames as f64 / self.poses.skeleton().fps;
        let got = self.audio.duration_secs();
        if (got - want).abs() > 1.0 / self.poses.skeleton().fps {
            return Err(DataError::Invalid(format!(
                "clip {} audio lasts {got:.3}s, poses span {want:.3}s",
                self.clip_id
            )));
        }
        Ok(())
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        self.poses.save(&dir.join("poses.pose"))?;
        self.audio.save_wav(&dir.join("audio.wav"))?;
        let meta = ClipMeta {
            clip_id: self.clip_id.clone(),
            speaker_id: self.speaker_id.clone(),
            emotion: self.emotion.clone(),
            transcript: self.transcript.clone(),
        };
        let path = dir.join("clip.json");
        std::fs::write(&path, serde_json::to_string_pretty(&meta).expect("clip meta serializes"))
            .map_err(|e| DataError::io(&path, e))
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("clip.json");
        let text = std::fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
        let meta: ClipMeta = serde_json::from_str(&text)
            .map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))?;
        Ok(Self {
            clip_id: meta.clip_id,
            speaker_id: meta.speaker_id,
            emotion: meta.emotion,
            poses: PoseSequence::load(&dir.join("poses.pose"))?,
            audio: AudioClip::load_wav(&dir.join("audio.wav"))?,
            transcript: meta.transcript,
        })
    }
}

/// A long recording with a per-frame emotion label (`None` = unlabelled).
#[derive(Debug, Clone)]
pub struct LabeledTrack {
    pub track_id: String,
    pub speaker_id: String,
    pub poses: PoseSequence,
    pub audio: AudioClip,
    pub labels: Vec<Option<EmotionLabel>>,
    /// Optional words with their start time in seconds.
    pub words: Vec<(f64, String)>,
}

impl LabeledTrack {
    /// Track with one label on every frame.
    pub fn uniform(track_id: &str, speaker_id: &str, poses: PoseSequence, audio: AudioClip, label: EmotionLabel) -> Self {
        let n = poses.frames();
        Self {
            track_id: track_id.into(),
            speaker_id: speaker_id.into(),
            poses,
            audio,
            labels: vec![Some(label); n],
            words: Vec::new(),
        }
    }
}

/// Sliding windows of [`CLIP_FRAMES`] frames at stride [`CLIP_STRIDE`].
///
/// Windows touching an unlabelled frame or spanning two labels are skipped;
/// every skip and every too-short track yields a note.
pub fn segment_corpus(tracks: &[LabeledTrack]) -> Result<(Vec<SourceClip>, Vec<String>)> {
    let mut clips = Vec::new();
    let mut notes = Vec::new();
    for track in tracks {
        let n = track.poses.frames();
        if track.labels.len() != n {
            return Err(DataError::Invalid(format!(
                "track {} has {} labels for {n} frames",
                track.track_id,
                track.labels.len()
            )));
        }
        if n < CLIP_FRAMES {
            notes.push(format!(
                "track {}: {n} frames, shorter than one {CLIP_FRAMES}-frame clip",
                track.track_id
            ));
            continue;
        }
        let fps = track.poses.skeleton().fps;
        let mut start = 0;
        while start + CLIP_FRAMES <= n {
            let end = start + CLIP_FRAMES;
            let labels = &track.labels[start..end];
            match labels[0].as_ref() {
                Some(first) if labels.iter().all(|l| l.as_ref() == Some(first)) => {
                    let (t0, t1) = (start as f64 / fps, end as f64 / fps);
                    let words: Vec<&str> = track
                        .words
                        .iter()
                        .filter(|(t, _)| *t >= t0 && *t < t1)
                        .map(|(_, w)| w.as_str())
                        .collect();
                    clips.push(SourceClip {
                        clip_id: format!("{}_f{start:05}", track.track_id),
                        speaker_id: track.speaker_id.clone(),
                        emotion: first.clone(),
                        poses: track.poses.slice(start..end)?,
                        audio: track.audio.window(t0, t1),
                        transcript: (!words.is_empty()).then(|| words.join(" ")),
                    });
                }
                _ => notes.push(format!(
                    "track {}: frames {start}..{end} unlabelled or mixed, skipped",
                    track.track_id
                )),
            }
            start += CLIP_STRIDE;
        }
    }
    Ok((clips, notes))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use emogest_core::{EmotionVocab, SkeletonSpec};

    use super::*;

    fn track(frames: usize) -> LabeledTrack {
        let sk = Arc::new(SkeletonSpec::upper_body_8());
        let vocab = EmotionVocab::beat();
        LabeledTrack::uniform(
            "t",
            "s",
            PoseSequence::zeros(frames, sk).unwrap(),
            AudioClip::silence(frames as f64 / 15.0, 8000),
            vocab.neutral(),
        )
    }

    #[test]
    fn window_counts() {
        let (c, n) = segment_corpus(&[track(150)]).unwrap();
        assert_eq!(c.len(), 4);
        assert!(n.is_empty());
        let starts: Vec<&str> = c.iter().map(|c| c.clip_id.as_str()).collect();
        assert_eq!(starts, ["t_f00000", "t_f00030", "t_f00060", "t_f00090"]);
        for clip in &c {
            clip.validate(CLIP_FRAMES).unwrap();
        }
        assert_eq!(segment_corpus(&[track(60)]).unwrap().0.len(), 1);
        let (c, n) = segment_corpus(&[track(59)]).unwrap();
        assert!(c.is_empty());
        assert_eq!(n.len(), 1);
    }

    #[test]
    fn unlabelled_windows_are_skipped() {
        let mut t = track(120);
        t.labels[70] = None;
        let (c, n) = segment_corpus(&[t]).unwrap();
        // Windows 0..60 is clean; 30..90 and 60..120 include frame 70.
        assert_eq!(c.len(), 1);
        assert_eq!(n.len(), 2);
    }

    #[test]
    fn clip_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (c, _) = segment_corpus(&[track(60)]).unwrap();
        c[0].save_dir(dir.path()).unwrap();
        let back = SourceClip::load_dir(dir.path()).unwrap();
        assert_eq!(back.clip_id, c[0].clip_id);
        assert_eq!(back.poses.frames(), 60);
        assert_eq!(back.audio.len(), c[0].audio.len());
    }
}
