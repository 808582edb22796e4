//! External-service adapters used to splice transitions, and deterministic
//! offline mocks for each.

use std::cell::Cell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use emogest_core::AudioClip;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{DataError, Result};

/// Three candidate transition sentences plus the model's confidence (1-5).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCandidate {
    pub options: [String; 3],
    pub confidence: u8,
}

impl TransitionCandidate {
    pub fn new(options: [String; 3], confidence: u8) -> Result<Self> {
        if !(1..=5).contains(&confidence) {
            return Err(DataError::Transcript(format!("confidence {confidence} outside 1..=5")));
        }
        if options.iter().any(|o| o.trim().is_empty()) {
            return Err(DataError::Transcript("empty option".into()));
        }
        Ok(Self { options, confidence })
    }

    /// Parses a reply holding a JSON object with keys `opt1`, `opt2`, `opt3`
    /// and `confi`. Surrounding prose, padded keys and trailing commas are
    /// tolerated.
    pub fn parse(reply: &str) -> Result<Self> {
        let start = reply
            .find('{')
            .ok_or_else(|| DataError::Transcript("no JSON object in reply".into()))?;
        let end = reply
            .rfind('}')
            .filter(|&e| e > start)
            .ok_or_else(|| DataError::Transcript("unterminated JSON object".into()))?;
        let body = strip_trailing_commas(&reply[start..=end]);
        let value: Value = serde_json::from_str(&body).map_err(|e| DataError::Transcript(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| DataError::Transcript("reply is not an object".into()))?;
        let fields: HashMap<String, &Value> = obj
            .iter()
            .map(|(k, v)| (k.trim().to_ascii_lowercase(), v))
            .collect();
        let text = |key: &str| -> Result<String> {
            fields
                .get(key)
                .and_then(|v| v.as_str())
                .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
                .ok_or_else(|| DataError::Transcript(format!("missing string field {key}")))
        };
        let confi = fields
            .get("confi")
            .ok_or_else(|| DataError::Transcript("missing field confi".into()))?;
        let confidence = match confi {
            Value::Number(n) => n.as_u64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        }
        .and_then(|c| u8::try_from(c).ok())
        .ok_or_else(|| DataError::Transcript(format!("confidence {confi} is not an integer")))?;
        Self::new([text("opt1")?, text("opt2")?, text("opt3")?], confidence)
    }
}

fn strip_trailing_commas(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let chars: Vec<char> = s.chars().collect();
    let mut in_str = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_str {
            out.push(c);
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        if c == '"' {
            in_str = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

#[derive(Debug, Clone)]
pub struct TranscriptRequest<'a> {
    pub head_text: &'a str,
    pub tail_text: &'a str,
    pub head_emotion: &'a str,
    pub tail_emotion: &'a str,
    pub target_words: usize,
}

pub trait TranscriptAdapter {
    fn complete(&self, req: &TranscriptRequest) -> Result<TransitionCandidate>;
}

#[derive(Debug, Clone)]
pub struct TtsRequest<'a> {
    pub text: &'a str,
    /// Voice context before and after the gap.
    pub prefix: &'a AudioClip,
    pub suffix: &'a AudioClip,
    pub duration_secs: f64,
    /// Zero-based synthesis attempt for this transition.
    pub attempt: usize,
}

pub trait TtsAdapter {
    fn inpaint(&self, req: &TtsRequest) -> Result<AudioClip>;
}

pub trait SpeakerAdapter {
    fn embed(&self, audio: &AudioClip) -> Result<Vec<f64>>;

    fn similarity(&self, a: &AudioClip, b: &AudioClip) -> Result<f64> {
        cosine(&self.embed(a)?, &self.embed(b)?)
    }
}

pub trait AsrAdapter {
    fn transcribe(&self, audio: &AudioClip) -> Result<String>;
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(DataError::adapter(
            "speaker",
            format!("embedding sizes {} and {} differ or are empty", a.len(), b.len()),
        ));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(DataError::adapter("speaker", "zero-norm embedding"));
    }
    Ok(dot / (na * nb))
}

/// The four adapters one transition build needs.
pub struct Adapters {
    pub transcript: Box<dyn TranscriptAdapter>,
    pub tts: Box<dyn TtsAdapter>,
    pub speaker: Box<dyn SpeakerAdapter>,
    pub asr: Box<dyn AsrAdapter>,
}

/// Audio fingerprint shared by the mock TTS and mock ASR.
pub fn audio_key(audio: &AudioClip) -> String {
    let mut h = Sha256::new();
    h.update(audio.sample_rate.to_le_bytes());
    for s in &audio.samples {
        h.update((*s as f32).to_le_bytes());
    }
    let d = h.finalize();
    d.iter().take(12).map(|b| format!("{b:02x}")).collect()
}

type Registry = Arc<Mutex<HashMap<String, String>>>;

const WORD_BANK: &[&str] = &[
    "so", "then", "it", "got", "me", "a", "bit", "and", "i", "felt", "we", "all", "saw", "the", "way", "go", "on", "now",
    "but", "that", "was", "not", "what", "my", "day", "you", "know", "just", "like", "this",
];

/// Picks words from a small bank, keyed by a hash of the request.
#[derive(Debug, Clone)]
pub struct MockTranscript {
    pub confidence: u8,
}

impl TranscriptAdapter for MockTranscript {
    fn complete(&self, req: &TranscriptRequest) -> Result<TransitionCandidate> {
        let d = Sha256::digest(format!("{}|{}|{}|{}", req.head_text, req.tail_text, req.head_emotion, req.tail_emotion));
        let sentence = |offset: usize, words: usize| {
            (0..words)
                .map(|i| WORD_BANK[d[(offset + i) % d.len()] as usize % WORD_BANK.len()])
                .collect::<Vec<_>>()
                .join(" ")
        };
        let n = req.target_words.max(1);
        TransitionCandidate::new(
            [sentence(0, n), sentence(7, n.saturating_sub(2).max(1)), sentence(13, n + 2)],
            self.confidence,
        )
    }
}

/// Sine-tone speech stand-in: one amplitude pulse per word over a tone
/// that glides from the prefix level to the suffix level. Remembers what it
/// said so [`MockAsr`] can transcribe it.
#[derive(Debug, Clone)]
pub struct MockTts {
    registry: Registry,
    pub tone_hz: f64,
}

impl TtsAdapter for MockTts {
    fn inpaint(&self, req: &TtsRequest) -> Result<AudioClip> {
        let sr = req.prefix.sample_rate;
        let n = (req.duration_secs * sr as f64).round() as usize;
        let words = req.text.split_whitespace().count().max(1);
        let rms = |a: &AudioClip| (a.samples.iter().map(|x| x * x).sum::<f64>() / a.len().max(1) as f64).sqrt();
        let (a0, a1) = (rms(req.prefix).max(0.05), rms(req.suffix).max(0.05));
        let phase = req.attempt as f64 * 0.37;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / sr as f64;
                let u = i as f64 / n.max(1) as f64;
                let word_pos = u * words as f64;
                let pulse = 0.5 + 0.5 * (PI * word_pos.fract()).sin();
                let level = ((1.0 - u) * a0 + u * a1) * std::f64::consts::SQRT_2;
                (level * pulse * (2.0 * PI * self.tone_hz * t + phase).sin()).clamp(-1.0, 1.0)
            })
            .collect();
        let audio = AudioClip::new(samples, sr)?;
        self.registry
            .lock()
            .expect("registry lock")
            .insert(audio_key(&audio), req.text.to_string());
        Ok(audio)
    }
}

/// Returns a fixed similarity regardless of the audio.
#[derive(Debug, Clone)]
pub struct MockSpeaker {
    pub similarity: f64,
}

impl SpeakerAdapter for MockSpeaker {
    fn embed(&self, audio: &AudioClip) -> Result<Vec<f64>> {
        let n = audio.len().max(1) as f64;
        let rms = (audio.samples.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        let zc = audio.samples.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count() as f64 / n;
        Ok(vec![1.0, rms, zc])
    }

    fn similarity(&self, _a: &AudioClip, _b: &AudioClip) -> Result<f64> {
        Ok(self.similarity)
    }
}

pub type FaultSchedule = Box<dyn Fn(usize) -> usize>;

/// Reads back what [`MockTts`] synthesized. `faults(call)` gives the number
/// of words to corrupt on the `call`-th transcription (zero-based).
pub struct MockAsr {
    registry: Registry,
    faults: FaultSchedule,
    calls: Cell<usize>,
}

impl MockAsr {
    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl AsrAdapter for MockAsr {
    fn transcribe(&self, audio: &AudioClip) -> Result<String> {
        let call = self.calls.get();
        self.calls.set(call + 1);
        let text = self
            .registry
            .lock()
            .expect("registry lock")
            .get(&audio_key(audio))
            .cloned()
            .ok_or_else(|| DataError::adapter("asr", "audio was not produced by the mock TTS"))?;
        let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        let errors = (self.faults)(call);
        for i in 0..errors {
            if i < words.len() {
                words[i] = format!("xx{i}");
            } else {
                words.push(format!("xx{i}"));
            }
        }
        Ok(words.join(" "))
    }
}

/// Offline adapter set. Defaults: confidence 5, similarity 1.0, perfect ASR.
pub struct MockAdapters {
    pub confidence: u8,
    pub similarity: f64,
    pub tone_hz: f64,
    pub asr_faults: FaultSchedule,
}

impl Default for MockAdapters {
    fn default() -> Self {
        Self {
            confidence: 5,
            similarity: 1.0,
            tone_hz: 220.0,
            asr_faults: Box::new(|_| 0),
        }
    }
}

impl MockAdapters {
    pub fn build(self) -> Adapters {
        let registry: Registry = Arc::default();
        Adapters {
            transcript: Box::new(MockTranscript {
                confidence: self.confidence,
            }),
            tts: Box::new(MockTts {
                registry: registry.clone(),
                tone_hz: self.tone_hz,
            }),
            speaker: Box::new(MockSpeaker {
                similarity: self.similarity,
            }),
            asr: Box::new(MockAsr {
                registry,
                faults: self.asr_faults,
                calls: Cell::new(0),
            }),
        }
    }
}
