//! Beat consistency between motion and speech.
//!
//! Motion beats are local minima of the mean joint speed. Audio beats are
//! peaks of the onset strength, the positive slope of a short-time RMS
//! envelope. The score is the mean over motion beats of
//! `exp(-d² / 2σ²)`, `d` being the distance to the nearest audio beat.

use emogest_core::AudioClip;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Envelope hop for onset detection, in seconds.
pub const ENVELOPE_HOP_SECS: f64 = 0.01;
/// Onset peaks closer than this are merged, keeping the stronger.
pub const MIN_ONSET_GAP_SECS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatConsistency {
    pub score: f64,
    pub motion_beats: Vec<f64>,
    pub audio_beats: Vec<f64>,
    /// Set when no motion beat was found; the score is then 0.
    pub no_motion_beats: bool,
}

/// Times (seconds) of local minima of the mean joint speed. Speeds use
/// central differences, so the first and last frames never hold a beat.
pub fn motion_beats(poses: &[f64], frame_len: usize, fps: f64) -> Vec<f64> {
    if frame_len == 0 || frame_len % 3 != 0 {
        return Vec::new();
    }
    let frames = poses.len() / frame_len;
    if frames < 5 {
        return Vec::new();
    }
    let frame = |t: usize| &poses[t * frame_len..(t + 1) * frame_len];
    let speed: Vec<f64> = (1..frames - 1)
        .map(|t| {
            let (a, b) = (frame(t - 1), frame(t + 1));
            let total: f64 = a
                .chunks(3)
                .zip(b.chunks(3))
                .map(|(p, q)| p.iter().zip(q).map(|(x, y)| (y - x).powi(2)).sum::<f64>().sqrt())
                .sum();
            total / (frame_len / 3) as f64 * fps / 2.0
        })
        .collect();
    (1..speed.len() - 1)
        .filter(|&i| speed[i] < speed[i - 1] && speed[i] <= speed[i + 1])
        .map(|i| (i + 1) as f64 / fps)
        .collect()
}

/// Times (seconds) of onset-strength peaks above mean + one standard
/// deviation.
pub fn audio_beats(audio: &AudioClip) -> Vec<f64> {
    let sr = audio.sample_rate as f64;
    let hop = ((ENVELOPE_HOP_SECS * sr).round() as usize).max(1);
    let win = 2 * hop;
    let x = &audio.samples;
    if x.len() < win {
        return Vec::new();
    }
    let env: Vec<f64> = (0..=(x.len() - win) / hop)
        .map(|k| {
            let w = &x[k * hop..k * hop + win];
            (w.iter().map(|v| v * v).sum::<f64>() / win as f64).sqrt()
        })
        .collect();
    if env.len() < 3 {
        return Vec::new();
    }
    let onset: Vec<f64> = std::iter::once(0.0)
        .chain(env.windows(2).map(|w| (w[1] - w[0]).max(0.0)))
        .collect();
    let n = onset.len() as f64;
    let mean = onset.iter().sum::<f64>() / n;
    let std = (onset.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let threshold = mean + std;
    let min_gap = (MIN_ONSET_GAP_SECS / ENVELOPE_HOP_SECS).round() as usize;
    let mut peaks: Vec<usize> = Vec::new();
    for k in 1..onset.len() - 1 {
        if onset[k] > threshold && onset[k] > onset[k - 1] && onset[k] >= onset[k + 1] {
            match peaks.last_mut() {
                Some(last) if k - *last < min_gap => {
                    if onset[k] > onset[*last] {
                        *last = k;
                    }
                }
                _ => peaks.push(k),
            }
        }
    }
    // The envelope frame k covers samples [k·hop, k·hop + win); its onset is
    // placed at the frame centre.
    peaks.into_iter().map(|k| (k * hop + win / 2) as f64 / sr).collect()
}

/// Mean Gaussian-kernel alignment of each motion beat to its nearest audio
/// beat; 0 when there are no motion beats.
pub fn bc_score(motion: &[f64], audio: &[f64], sigma: f64) -> f64 {
    if motion.is_empty() {
        return 0.0;
    }
    let total: f64 = motion
        .iter()
        .map(|tm| {
            let d2 = audio.iter().map(|ta| (tm - ta).powi(2)).fold(f64::INFINITY, f64::min);
            (-d2 / (2.0 * sigma * sigma)).exp()
        })
        .sum();
    total / motion.len() as f64
}

/// Beat consistency of a pose sequence with its audio. Durations must agree
/// within one frame.
pub fn beat_consistency(
    poses: &[f64],
    frame_len: usize,
    fps: f64,
    audio: &AudioClip,
    sigma: f64,
) -> Result<BeatConsistency> {
    if !(sigma > 0.0) || !(fps > 0.0) {
        return invalid("sigma and fps must be positive");
    }
    if frame_len == 0 || poses.len() % frame_len != 0 {
        return invalid("poses are not a whole number of frames");
    }
    let pose_secs = (poses.len() / frame_len) as f64 / fps;
    if (pose_secs - audio.duration_secs()).abs() > 1.0 / fps + 1e-9 {
        return invalid(format!(
            "poses span {pose_secs:.3} s but audio spans {:.3} s",
            audio.duration_secs()
        ));
    }
    let motion = motion_beats(poses, frame_len, fps);
    let audio_b = audio_beats(audio);
    if motion.is_empty() {
        log::warn!("no motion beats detected; beat consistency is 0");
    }
    Ok(BeatConsistency {
        score: bc_score(&motion, &audio_b, sigma),
        no_motion_beats: motion.is_empty(),
        motion_beats: motion,
        audio_beats: audio_b,
    })
}
