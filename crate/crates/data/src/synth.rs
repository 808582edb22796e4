//! Procedural toy corpus for desk-scale runs.
//!
//! Motion: every joint oscillates around a rest pose shifted by a
//! per-emotion arm offset and a small per-speaker offset. Amplitude and
//! frequency depend on the emotion. Audio: a per-emotion carrier tone whose
//! envelope pulses whenever the right wrist reaches an extreme (speed minimum).

use std::f64::consts::PI;
use std::sync::Arc;

use emogest_core::{AudioClip, EmotionVocab, PoseSequence, SegmentLayout, SkeletonSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::adapters::MockAdapters;
use crate::clip::{segment_corpus, LabeledTrack, CLIP_FRAMES, CLIP_STRIDE};
use crate::corpus::{build_corpus, Corpus, CorpusOptions};
use crate::error::{DataError, Result};
use crate::pipeline::{BuildContext, PipelineConfig};

/// Joint order of [`SkeletonSpec::upper_body_8`].
const REST: [[f64; 3]; 8] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.25, 0.0],
    [0.0, 0.45, 0.0],
    [0.0, 0.6, 0.0],
    [-0.25, 0.3, 0.0],
    [-0.35, 0.1, 0.1],
    [0.25, 0.3, 0.0],
    [0.35, 0.1, 0.1],
];
/// How strongly each joint follows the oscillation.
const SWING: [f64; 8] = [0.05, 0.2, 0.3, 0.4, 0.7, 1.0, 0.7, 1.0];
const R_WRIST: usize = 7;
const ARM_OFFSET: f64 = 0.15;
const SPEAKER_OFFSET: f64 = 0.01;
const POSE_NOISE: f64 = 0.005;
const AUDIO_NOISE: f64 = 0.01;
const PULSE_WIDTH: f64 = 0.04;

const WORDS: &[&str] = &[
    "we", "went", "there", "and", "it", "was", "really", "quite", "something", "you", "know", "the", "people", "were",
    "kind", "of", "loud", "then", "i", "said", "okay", "so", "what", "now",
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub emotions: EmotionVocab,
    pub speakers: usize,
    /// Accepted samples to produce (train and test together).
    pub samples: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub layout: SegmentLayout,
    pub seed_frames: usize,
    pub test_fraction: f64,
    pub hop_secs: f64,
}

impl SynthConfig {
    pub fn from_run(cfg: &emogest_core::RunConfig, speakers: usize, samples: usize) -> Self {
        Self {
            emotions: cfg.emotions.clone(),
            speakers,
            samples,
            seed: cfg.seed,
            sample_rate: cfg.audio.sample_rate,
            layout: cfg.layout,
            seed_frames: cfg.model.seed_frames,
            test_fraction: 0.2,
            hop_secs: cfg.hop_secs(),
        }
    }
}

/// Motion and audio parameters of one emotion class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionStyle {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub carrier_hz: f64,
    /// Added to the elbows (scaled 1.5x on the wrists), mirrored left/right.
    pub arm_offset: [f64; 2],
}

pub fn emotion_style(id: usize, classes: usize) -> EmotionStyle {
    let non_neutral = classes.saturating_sub(1).max(1);
    let arm_offset = if id == 0 {
        [0.0, 0.0]
    } else {
        let theta = 2.0 * PI * (id - 1) as f64 / non_neutral as f64;
        [ARM_OFFSET * theta.cos(), ARM_OFFSET * theta.sin()]
    };
    let u = id as f64 / non_neutral as f64;
    EmotionStyle {
        amplitude: 0.03 + 0.12 * u,
        frequency_hz: 0.5 + 1.2 * u,
        carrier_hz: 180.0 * 1.35f64.powi(id as i32),
        arm_offset,
    }
}

struct SpeakerVoice {
    offset: Vec<[f64; 3]>,
    pitch: f64,
}

/// Deterministic toy corpus: tracks per speaker and emotion, segmented,
/// paired and spliced with offline mock adapters.
pub fn synthesize_toy_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    let classes = cfg.emotions.len();
    if classes < 2 {
        return Err(DataError::Invalid("toy corpus needs neutral plus at least one emotion".into()));
    }
    if cfg.speakers == 0 || cfg.samples == 0 {
        return Err(DataError::Invalid("toy corpus needs speakers and samples".into()));
    }
    if cfg.layout.head_frames != CLIP_FRAMES || cfg.layout.tail_frames != CLIP_FRAMES {
        return Err(DataError::Invalid(format!(
            "toy corpus clips are {CLIP_FRAMES} frames; layout head/tail must match"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let skeleton = Arc::new(SkeletonSpec::upper_body_8());

    let tails_per_head = (classes - 1).min(2);
    // Extra heads absorb rejections and the per-speaker rounding.
    let heads = (cfg.samples.div_ceil(tails_per_head)).div_ceil(cfg.speakers) + 2;
    let head_frames = CLIP_FRAMES + CLIP_STRIDE * (heads - 1);
    let tail_frames = CLIP_FRAMES + CLIP_STRIDE * (heads.div_ceil(classes - 1) + 1);

    let mut tracks = Vec::new();
    for s in 0..cfg.speakers {
        let offset_noise = Normal::new(0.0, SPEAKER_OFFSET).expect("valid sigma");
        let voice = SpeakerVoice {
            offset: (0..8)
                .map(|_| std::array::from_fn(|_| offset_noise.sample(&mut rng)))
                .collect(),
            pitch: rng.gen_range(0.95..1.05),
        };
        for label in cfg.emotions.labels() {
            let frames = if label.is_neutral() { head_frames } else { tail_frames };
            let track_id = format!("spk{s:02}_{}", label.name);
            let (poses, audio, words) = synth_track(&mut rng, &skeleton, &voice, label.id, classes, frames, cfg.sample_rate)?;
            let mut track = LabeledTrack::uniform(&track_id, &format!("spk{s:02}"), poses, audio, label);
            track.words = words;
            tracks.push(track);
        }
    }
    let (clips, notes) = segment_corpus(&tracks)?;
    let pipeline = PipelineConfig::default();
    let ctx = BuildContext {
        cfg: &pipeline,
        layout: &cfg.layout,
        vocab: &cfg.emotions,
        seed_frames: cfg.seed_frames,
        hop_secs: cfg.hop_secs,
    };
    let opts = CorpusOptions {
        seed: rng.gen(),
        max_samples: Some(cfg.samples),
        test_fraction: cfg.test_fraction,
        ..Default::default()
    };
    let mut corpus = build_corpus(&ctx, clips, &MockAdapters::default().build(), &opts)?;
    corpus.notes.splice(0..0, notes);
    Ok(corpus)
}

type Track = (PoseSequence, AudioClip, Vec<(f64, String)>);

fn synth_track(
    rng: &mut ChaCha8Rng,
    skeleton: &Arc<SkeletonSpec>,
    voice: &SpeakerVoice,
    emotion: usize,
    classes: usize,
    frames: usize,
    sample_rate: u32,
) -> Result<Track> {
    let style = emotion_style(emotion, classes);
    let fps = skeleton.fps;
    let phases: Vec<[f64; 3]> = (0..8).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..2.0 * PI))).collect();
    let noise = Normal::new(0.0, POSE_NOISE).expect("valid sigma");
    let w = 2.0 * PI * style.frequency_hz;

    let mut base = REST;
    for (j, scale) in [(4, 1.0), (5, 1.5), (6, 1.0), (7, 1.5)] {
        let mirror = if j >= 6 { -1.0 } else { 1.0 };
        base[j][0] += mirror * scale * style.arm_offset[0];
        base[j][1] += scale * style.arm_offset[1];
    }
    let mut data = Vec::with_capacity(frames * 24);
    for f in 0..frames {
        let t = f as f64 / fps;
        for j in 0..8 {
            for c in 0..3 {
                let swing = style.amplitude * SWING[j] * (w * t + phases[j][c]).sin();
                data.push(base[j][c] + voice.offset[j][c] + swing + noise.sample(rng));
            }
        }
    }
    let poses = PoseSequence::new(data, skeleton.clone())?;

    // The right wrist's vertical swing peaks where w t + phase = pi/2 + k pi.
    let secs = frames as f64 / fps;
    let phase = phases[R_WRIST][1];
    let first = ((PI / 2.0 - phase) / PI).ceil();
    let beats: Vec<f64> = (0..)
        .map(|k| ((first + k as f64) * PI + PI / 2.0 - phase) / w)
        .take_while(|&t| t < secs + PULSE_WIDTH * 4.0)
        .filter(|&t| t >= -PULSE_WIDTH * 4.0)
        .collect();
    let n = (secs * sample_rate as f64).round() as usize;
    let carrier = style.carrier_hz * voice.pitch;
    let audio_noise = Normal::new(0.0, AUDIO_NOISE).expect("valid sigma");
    let mut b = 0;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            while b + 1 < beats.len() && (beats[b + 1] - t).abs() < (beats[b] - t).abs() {
                b += 1;
            }
            let d = beats.get(b).map_or(f64::INFINITY, |&bt| t - bt);
            let envelope = 0.15 + 0.6 * (-0.5 * (d / PULSE_WIDTH).powi(2)).exp();
            (envelope * (2.0 * PI * carrier * t).sin() + audio_noise.sample(rng)).clamp(-1.0, 1.0)
        })
        .collect();
    let audio = AudioClip::new(samples, sample_rate)?;

    let mut words = Vec::new();
    let mut t = rng.gen_range(0.0..0.5);
    while t < secs {
        words.push((t, WORDS[rng.gen_range(0..WORDS.len())].to_string()));
        t += rng.gen_range(0.3..0.7);
    }
    Ok((poses, audio, words))
}

/// Per-clip feature used to check class separation: mean joint positions
/// followed by per-joint motion RMS.
pub fn clip_features(poses: &PoseSequence) -> Vec<f64> {
    let n = poses.frames() as f64;
    let k = poses.frame_len();
    let mut mean = vec![0.0; k];
    for t in 0..poses.frames() {
        for (m, x) in mean.iter_mut().zip(poses.frame(t)) {
            *m += x / n;
        }
    }
    let mut rms = vec![0.0; k];
    for t in 0..poses.frames() {
        for ((r, x), m) in rms.iter_mut().zip(poses.frame(t)).zip(&mean) {
            *r += (x - m).powi(2) / n;
        }
    }
    mean.extend(rms.into_iter().map(f64::sqrt));
    mean
}

#[cfg(test)]
mod tests {
    use emogest_core::sample::Split;

    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            emotions: EmotionVocab::beat_prefix(4).unwrap(),
            speakers: 2,
            samples: 12,
            seed: 3,
            sample_rate: 8000,
            layout: SegmentLayout::default(),
            seed_frames: 4,
            test_fraction: 0.25,
            hop_secs: 256.0 / 8000.0,
        }
    }

    #[test]
    fn corpus_is_valid_and_seeded() {
        let cfg = small();
        let a = synthesize_toy_corpus(&cfg).unwrap();
        assert_eq!(a.samples.len(), 12);
        assert_eq!(a.samples.iter().filter(|s| s.0.split == Split::Test).count(), 3);
        for (s, m) in &a.samples {
            s.validate(&cfg.layout, &cfg.emotions, cfg.hop_secs).unwrap();
            assert!(m.head_clip.is_some() && m.transcript.is_some());
        }
        let b = synthesize_toy_corpus(&cfg).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.0, y.0);
        }
        let c = synthesize_toy_corpus(&SynthConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.samples[0].0.audio, c.samples[0].0.audio);
    }

    #[test]
    fn styles_differ_per_class() {
        let s: Vec<_> = (0..5).map(|e| emotion_style(e, 5)).collect();
        assert_eq!(s[0].arm_offset, [0.0, 0.0]);
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(s[i], s[j]);
            }
        }
    }

    #[test]
    fn beat_pulses_follow_wrist_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sk = Arc::new(SkeletonSpec::upper_body_8());
        let voice = SpeakerVoice {
            offset: vec![[0.0; 3]; 8],
            pitch: 1.0,
        };
        let (poses, audio, _) = synth_track(&mut rng, &sk, &voice, 4, 5, 150, 8000).unwrap();
        // Loudest 10 ms window sits near a wrist extreme.
        let win = 80;
        let (best, _) = (0..audio.len() / win)
            .map(|k| (k, audio.samples[k * win..(k + 1) * win].iter().map(|x| x * x).sum::<f64>()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let t = (best * win + win / 2) as f64 / 8000.0;
        let f = (t * 15.0).round() as usize;
        let y = |f: usize| poses.joint(f.min(149), R_WRIST)[1];
        let speed = (y(f + 1) - y(f.saturating_sub(1))).abs();
        let max_speed = (1..149).map(|f| (y(f + 1) - y(f - 1)).abs()).fold(0.0, f64::max);
        assert!(speed < 0.5 * max_speed, "speed {speed} vs max {max_speed}");
    }
}
