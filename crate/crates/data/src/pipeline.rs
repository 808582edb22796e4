//! Transition splicing: transcript, inpainted audio, speaker and ASR gates,
//! then assembly of the finished sample. Every attempt ends up as one
//! manifest record.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use emogest_core::sample::{SampleMeta, Split};
use emogest_core::{AudioClip, EmotionTransitionSample, EmotionVocab, SegmentLayout};
use serde::{Deserialize, Serialize};

use crate::adapters::{Adapters, TranscriptRequest, TtsRequest};
use crate::clip::SourceClip;
use crate::error::{DataError, Result};
use crate::pairing::ClipPair;
use crate::wer::{tokenize, wer_text};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub confidence_threshold: u8,
    pub max_words: usize,
    pub max_phonemes: usize,
    pub similarity_threshold: f64,
    pub wer_threshold: f64,
    /// Re-syntheses allowed after the first TTS attempt.
    pub max_retries: usize,
    pub transition_secs: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 4,
            max_words: 10,
            max_phonemes: 30,
            similarity_threshold: 0.75,
            wer_threshold: 0.125,
            max_retries: 2,
            transition_secs: 2.0,
        }
    }
}

/// Rough phoneme count: three phonemes per four letters, at least one per word.
pub fn estimate_phonemes(text: &str) -> usize {
    tokenize(text)
        .iter()
        .map(|w| {
            let letters = w.chars().filter(|c| c.is_alphabetic()).count();
            ((letters as f64 * 0.75).round() as usize).max(1)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Accepted,
    Rejected,
}

/// Reason codes written to the manifest for rejected pairs.
pub mod reason {
    pub const TRANSCRIPT_ERROR: &str = "transcript_error";
    pub const LOW_CONFIDENCE: &str = "low_confidence";
    pub const OVER_BUDGET: &str = "over_budget";
    pub const TTS_ERROR: &str = "tts_error";
    pub const SPEAKER_ERROR: &str = "speaker_error";
    pub const SPEAKER_MISMATCH: &str = "speaker_mismatch";
    pub const ASR_ERROR: &str = "asr_error";
    pub const WER_EXCEEDED: &str = "wer_exceeded";
    pub const INVALID_SAMPLE: &str = "invalid_sample";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub head_clip: String,
    pub tail_clip: String,
    pub speaker_id: String,
    pub head_emotion: String,
    pub tail_emotion: String,
    pub status: Status,
    pub reason: Option<String>,
    pub transcript: Option<String>,
    pub confidence: Option<u8>,
    /// Number of TTS syntheses performed.
    pub tts_attempts: usize,
    pub wer: Vec<f64>,
    pub speaker_similarity: Option<f64>,
    /// Adapter errors seen along the way, in order.
    pub errors: Vec<String>,
}

impl ManifestRecord {
    fn new(sample_id: &str, head: &SourceClip, tail: &SourceClip) -> Self {
        Self {
            sample_id: sample_id.into(),
            head_clip: head.clip_id.clone(),
            tail_clip: tail.clip_id.clone(),
            speaker_id: head.speaker_id.clone(),
            head_emotion: head.emotion.name.clone(),
            tail_emotion: tail.emotion.name.clone(),
            status: Status::Rejected,
            reason: None,
            transcript: None,
            confidence: None,
            tts_attempts: 0,
            wer: Vec::new(),
            speaker_similarity: None,
            errors: Vec::new(),
        }
    }

    fn reject(mut self, why: &str) -> BuildOutcome {
        self.status = Status::Rejected;
        self.reason = Some(why.into());
        BuildOutcome {
            record: self,
            sample: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub record: ManifestRecord,
    pub sample: Option<(EmotionTransitionSample, SampleMeta)>,
}

/// Everything fixed across one pipeline run.
#[derive(Debug, Clone)]
pub struct BuildContext<'a> {
    pub cfg: &'a PipelineConfig,
    pub layout: &'a SegmentLayout,
    pub vocab: &'a EmotionVocab,
    pub seed_frames: usize,
    /// Duration tolerance used when validating assembled samples.
    pub hop_secs: f64,
}

/// Builds one sample from a head/tail pair, or a rejection with a reason.
///
/// Adapter errors are retried while attempts remain; a speaker mismatch
/// rejects at once; a WER above threshold triggers re-synthesis.
pub fn build_transition(
    ctx: &BuildContext,
    sample_id: &str,
    head: &SourceClip,
    tail: &SourceClip,
    adapters: &Adapters,
) -> BuildOutcome {
    let cfg = ctx.cfg;
    let mut rec = ManifestRecord::new(sample_id, head, tail);
    if head.speaker_id != tail.speaker_id {
        rec.errors.push("head and tail speakers differ".into());
        return rec.reject(reason::INVALID_SAMPLE);
    }

    let head_text = head.transcript.clone().unwrap_or_default();
    let tail_text = tail.transcript.clone().unwrap_or_default();
    let request = TranscriptRequest {
        head_text: &head_text,
        tail_text: &tail_text,
        head_emotion: &head.emotion.name,
        tail_emotion: &tail.emotion.name,
        target_words: cfg.max_words,
    };
    let mut candidate = None;
    for _ in 0..=cfg.max_retries {
        match adapters.transcript.complete(&request) {
            Ok(c) => {
                candidate = Some(c);
                break;
            }
            Err(e) => rec.errors.push(e.to_string()),
        }
    }
    let Some(candidate) = candidate else {
        return rec.reject(reason::TRANSCRIPT_ERROR);
    };
    rec.confidence = Some(candidate.confidence);
    if candidate.confidence < cfg.confidence_threshold {
        return rec.reject(reason::LOW_CONFIDENCE);
    }
    let Some(text) = candidate.options.iter().find(|o| {
        let words = tokenize(o).len();
        words > 0 && words <= cfg.max_words && estimate_phonemes(o) <= cfg.max_phonemes
    }) else {
        return rec.reject(reason::OVER_BUDGET);
    };
    rec.transcript = Some(text.clone());

    let sr = head.audio.sample_rate;
    let tail_audio = match tail.audio.resample(sr) {
        Ok(a) => a,
        Err(e) => {
            rec.errors.push(e.to_string());
            return rec.reject(reason::INVALID_SAMPLE);
        }
    };
    let mut accepted_audio = None;
    let mut last_failure = reason::WER_EXCEEDED;
    for attempt in 0..=cfg.max_retries {
        rec.tts_attempts += 1;
        let req = TtsRequest {
            text,
            prefix: &head.audio,
            suffix: &tail_audio,
            duration_secs: cfg.transition_secs,
            attempt,
        };
        let audio = match adapters.tts.inpaint(&req).and_then(|a| Ok(a.resample(sr)?)) {
            Ok(a) => a,
            Err(e) => {
                rec.errors.push(e.to_string());
                last_failure = reason::TTS_ERROR;
                continue;
            }
        };
        let similarity = adapters
            .speaker
            .similarity(&audio, &head.audio)
            .and_then(|a| Ok(a.min(adapters.speaker.similarity(&audio, &tail_audio)?)));
        let similarity = match similarity {
            Ok(s) => s,
            Err(e) => {
                rec.errors.push(e.to_string());
                last_failure = reason::SPEAKER_ERROR;
                continue;
            }
        };
        rec.speaker_similarity = Some(similarity);
        if similarity < cfg.similarity_threshold {
            return rec.reject(reason::SPEAKER_MISMATCH);
        }
        let heard = match adapters.asr.transcribe(&audio) {
            Ok(h) => h,
            Err(e) => {
                rec.errors.push(e.to_string());
                last_failure = reason::ASR_ERROR;
                continue;
            }
        };
        let w = match wer_text(text, &heard) {
            Ok(w) => w,
            Err(e) => {
                rec.errors.push(e.to_string());
                return rec.reject(reason::OVER_BUDGET);
            }
        };
        rec.wer.push(w);
        if w > cfg.wer_threshold {
            last_failure = reason::WER_EXCEEDED;
            continue;
        }
        accepted_audio = Some(audio);
        break;
    }
    let Some(transition) = accepted_audio else {
        return rec.reject(last_failure);
    };

    match assemble(ctx, sample_id, head, tail, &tail_audio, &transition, text) {
        Ok(pair) => {
            rec.status = Status::Accepted;
            BuildOutcome {
                record: rec,
                sample: Some(pair),
            }
        }
        Err(e) => {
            rec.errors.push(e.to_string());
            rec.reject(reason::INVALID_SAMPLE)
        }
    }
}

fn assemble(
    ctx: &BuildContext,
    sample_id: &str,
    head: &SourceClip,
    tail: &SourceClip,
    tail_audio: &AudioClip,
    transition: &AudioClip,
    text: &str,
) -> Result<(EmotionTransitionSample, SampleMeta)> {
    let fps = head.poses.skeleton().fps;
    let head_secs = ctx.layout.head_frames as f64 / fps;
    let tail_secs = ctx.layout.tail_frames as f64 / fps;
    let trans_secs = ctx.layout.transition_frames as f64 / fps;
    let (h, _) = head.audio.fit_to_duration(head_secs);
    let (m, _) = transition.fit_to_duration(trans_secs);
    let (t, _) = tail_audio.fit_to_duration(tail_secs);
    let audio = AudioClip::concat(&[&h, &m, &t])?;
    if ctx.seed_frames > head.poses.frames() {
        return Err(DataError::Invalid(format!(
            "{} seed frames requested from a {}-frame head",
            ctx.seed_frames,
            head.poses.frames()
        )));
    }
    let sample = EmotionTransitionSample {
        sample_id: sample_id.into(),
        speaker_id: head.speaker_id.clone(),
        split: Split::Train,
        audio,
        head_pose_gt: head.poses.clone(),
        tail_pose_gt: tail.poses.clone(),
        head_emotion: head.emotion.clone(),
        tail_emotion: tail.emotion.clone(),
        seed_poses: head.poses.slice(0..ctx.seed_frames)?,
    };
    sample.validate(ctx.layout, ctx.vocab, ctx.hop_secs)?;
    let meta = SampleMeta {
        head_clip: Some(head.clip_id.clone()),
        tail_clip: Some(tail.clip_id.clone()),
        transcript: Some(text.into()),
        ..sample.meta()
    };
    Ok((sample, meta))
}

/// Sample id for the `index`-th attempted pair.
pub fn sample_id(index: usize) -> String {
    format!("s{index:05}")
}

/// Runs [`build_transition`] over every pair in order, stopping once
/// `max_accepted` samples exist (if given).
pub fn run_pairs(
    ctx: &BuildContext,
    clips: &[SourceClip],
    pairs: &[ClipPair],
    adapters: &Adapters,
    max_accepted: Option<usize>,
) -> Vec<BuildOutcome> {
    let mut out = Vec::new();
    let mut accepted = 0;
    for (i, p) in pairs.iter().enumerate() {
        if max_accepted.is_some_and(|m| accepted >= m) {
            break;
        }
        let outcome = build_transition(ctx, &sample_id(i), &clips[p.head], &clips[p.tail], adapters);
        if outcome.sample.is_some() {
            accepted += 1;
        } else {
            log::debug!(
                "pair {} rejected: {}",
                outcome.record.sample_id,
                outcome.record.reason.as_deref().unwrap_or("?")
            );
        }
        out.push(outcome);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub attempted: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub reasons: BTreeMap<String, usize>,
}

impl ManifestSummary {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a ManifestRecord>) -> Self {
        let mut s = Self::default();
        for r in records {
            s.attempted += 1;
            match r.status {
                Status::Accepted => s.accepted += 1,
                Status::Rejected => {
                    s.rejected += 1;
                    *s.reasons.entry(r.reason.clone().unwrap_or_default()).or_default() += 1;
                }
            }
        }
        s
    }

    pub fn reconciles(&self) -> bool {
        self.accepted + self.rejected == self.attempted
    }
}

/// Append-only JSONL manifest.
pub struct ManifestWriter {
    path: PathBuf,
    file: File,
}

impl ManifestWriter {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| DataError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, record: &ManifestRecord) -> Result<()> {
        let line = serde_json::to_string(record).expect("manifest record serializes");
        writeln!(self.file, "{line}").map_err(|e| DataError::io(&self.path, e))
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|line| {
            let line = line.map_err(|e| DataError::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use emogest_core::{PoseSequence, SkeletonSpec};

    use super::*;
    use crate::adapters::MockAdapters;

    fn clip(id: &str, emotion: &str, transcript: &str) -> SourceClip {
        let vocab = EmotionVocab::beat();
        let sk = Arc::new(SkeletonSpec::upper_body_8());
        let data = (0..60 * 24).map(|i| (i as f64 * 0.01).sin()).collect();
        SourceClip {
            clip_id: id.into(),
            speaker_id: "spk".into(),
            emotion: vocab.by_name(emotion).unwrap(),
            poses: PoseSequence::new(data, sk).unwrap(),
            audio: AudioClip::new((0..32000).map(|i| 0.2 * (i as f64 * 0.1).sin()).collect(), 8000).unwrap(),
            transcript: Some(transcript.into()),
        }
    }

    fn run(adapters: MockAdapters, cfg: &PipelineConfig) -> BuildOutcome {
        let layout = SegmentLayout::default();
        let vocab = EmotionVocab::beat();
        let ctx = BuildContext {
            cfg,
            layout: &layout,
            vocab: &vocab,
            seed_frames: 4,
            hop_secs: 256.0 / 8000.0,
        };
        build_transition(
            &ctx,
            "s0",
            &clip("h", "neutral", "well i was just saying"),
            &clip("t", "anger", "and that is not fine"),
            &adapters.build(),
        )
    }

    #[test]
    fn happy_path_with_mocks() {
        let out = run(MockAdapters::default(), &PipelineConfig::default());
        assert_eq!(out.record.status, Status::Accepted, "{:?}", out.record);
        let (sample, meta) = out.sample.unwrap();
        assert!((sample.audio.duration_secs() - 10.0).abs() < 1e-9);
        assert_eq!(sample.head_pose_gt.frames() + 30 + sample.tail_pose_gt.frames(), 150);
        assert_eq!(sample.seed_poses.frames(), 4);
        assert_eq!(meta.head_clip.as_deref(), Some("h"));
        assert_eq!(out.record.tts_attempts, 1);
        assert_eq!(out.record.wer, vec![0.0]);
    }

    #[test]
    fn wer_failure_retries_then_succeeds_or_rejects() {
        let cfg = PipelineConfig::default();
        let once = MockAdapters {
            asr_faults: Box::new(|call| if call == 0 { 2 } else { 0 }),
            ..Default::default()
        };
        let out = run(once, &cfg);
        assert_eq!(out.record.status, Status::Accepted);
        assert_eq!(out.record.tts_attempts, 2);
        assert!((out.record.wer[0] - 0.2).abs() < 1e-12);

        let always = MockAdapters {
            asr_faults: Box::new(|_| 2),
            ..Default::default()
        };
        let out = run(always, &cfg);
        assert_eq!(out.record.reason.as_deref(), Some(reason::WER_EXCEEDED));
        assert_eq!(out.record.tts_attempts, cfg.max_retries + 1);
        assert_eq!(out.record.wer.len(), cfg.max_retries + 1);
    }

    #[test]
    fn gate_rejections() {
        let cfg = PipelineConfig::default();
        let out = run(
            MockAdapters {
                similarity: 0.3,
                ..Default::default()
            },
            &cfg,
        );
        assert_eq!(out.record.reason.as_deref(), Some(reason::SPEAKER_MISMATCH));
        assert_eq!(out.record.tts_attempts, 1);
        let out = run(
            MockAdapters {
                confidence: 3,
                ..Default::default()
            },
            &cfg,
        );
        assert_eq!(out.record.reason.as_deref(), Some(reason::LOW_CONFIDENCE));
        let tight = PipelineConfig {
            max_phonemes: 1,
            ..Default::default()
        };
        assert_eq!(
            run(MockAdapters::default(), &tight).record.reason.as_deref(),
            Some(reason::OVER_BUDGET)
        );
    }

    #[test]
    fn phoneme_estimate() {
        assert_eq!(estimate_phonemes("a I"), 2);
        assert_eq!(estimate_phonemes("transition"), 8);
        assert_eq!(estimate_phonemes(""), 0);
    }

    #[test]
    fn manifest_round_trip_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let a = run(MockAdapters::default(), &PipelineConfig::default()).record;
        let b = run(
            MockAdapters {
                similarity: 0.0,
                ..Default::default()
            },
            &PipelineConfig::default(),
        )
        .record;
        let mut w = ManifestWriter::open(&path).unwrap();
        w.append(&a).unwrap();
        drop(w);
        ManifestWriter::open(&path).unwrap().append(&b).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, vec![a, b]);
        let s = ManifestSummary::from_records(&back);
        assert_eq!((s.attempted, s.accepted, s.rejected), (2, 1, 1));
        assert!(s.reconciles());
        assert_eq!(s.reasons[reason::SPEAKER_MISMATCH], 1);
    }
}
