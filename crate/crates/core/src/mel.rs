//! Log-mel spectrogram: centered Hann STFT, HTK mel filterbank, natural log.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio::AudioClip;
use crate::error::{CoreError, Result};

pub const LOG_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelParams {
    pub fft_size: usize,
    pub hop_length: usize,
    pub mel_bins: usize,
}

impl Default for MelParams {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            hop_length: 512,
            mel_bins: 80,
        }
    }
}

/// `frames × mel_bins` log mel energies, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub data: Vec<f64>,
    pub frames: usize,
    pub mel_bins: usize,
    pub hop_length: usize,
    pub fft_size: usize,
}

impl MelSpectrogram {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.mel_bins..(t + 1) * self.mel_bins]
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangle edge frequencies: `mel_bins + 2` points evenly spaced in mel
/// between 0 Hz and Nyquist.
pub fn mel_edges_hz(mel_bins: usize, sample_rate: u32) -> Vec<f64> {
    let hi = hz_to_mel(sample_rate as f64 / 2.0);
    (0..mel_bins + 2)
        .map(|i| mel_to_hz(hi * i as f64 / (mel_bins + 1) as f64))
        .collect()
}

/// `mel_bins × (fft_size/2 + 1)` triangular filter weights.
pub fn mel_filterbank(mel_bins: usize, fft_size: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let edges = mel_edges_hz(mel_bins, sample_rate);
    let n_freqs = fft_size / 2 + 1;
    let bin_hz = sample_rate as f64 / fft_size as f64;
    (0..mel_bins)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_freqs)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let up = (f - lo) / (mid - lo);
                    let down = (hi - f) / (hi - mid);
                    up.min(down).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Number of STFT frames for a centered transform: `len / hop + 1`.
pub fn frame_count(samples: usize, hop_length: usize) -> usize {
    samples / hop_length + 1
}

pub fn compute_mel(audio: &AudioClip, params: MelParams) -> Result<MelSpectrogram> {
    let MelParams {
        fft_size,
        hop_length,
        mel_bins,
    } = params;
    if audio.is_empty() {
        return Err(CoreError::Audio("cannot compute mel of empty audio".into()));
    }
    if hop_length == 0 || mel_bins == 0 {
        return Err(CoreError::Audio("hop length and mel bins must be positive".into()));
    }
    if fft_size < hop_length {
        return Err(CoreError::Audio(format!(
            "fft size {fft_size} smaller than hop length {hop_length}"
        )));
    }

    let pad = fft_size / 2;
    let mut padded = vec![0.0; audio.len() + 2 * pad];
    padded[pad..pad + audio.len()].copy_from_slice(&audio.samples);

    // Periodic Hann window.
    let window: Vec<f64> = (0..fft_size)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / fft_size as f64).cos())
        .collect();
    let bank = mel_filterbank(mel_bins, fft_size, audio.sample_rate);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);

    let frames = frame_count(audio.len(), hop_length);
    let n_freqs = fft_size / 2 + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut power = vec![0.0; n_freqs];
    let mut data = Vec::with_capacity(frames * mel_bins);
    for t in 0..frames {
        let start = t * hop_length;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = Complex::new(padded[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for filter in &bank {
            let e: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
            data.push(e.max(LOG_FLOOR).ln());
        }
    }
    Ok(MelSpectrogram {
        data,
        frames,
        mel_bins,
        hop_length,
        fft_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, secs: f64, sr: u32, phase: f64) -> AudioClip {
        let n = (secs * sr as f64) as usize;
        let s = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64 + phase).sin() * 0.5)
            .collect();
        AudioClip::new(s, sr).unwrap()
    }

    #[test]
    fn silence_hits_log_floor() {
        let mel = compute_mel(&AudioClip::silence(0.5, 16000), MelParams::default()).unwrap();
        assert!(mel.data.iter().all(|v| *v == LOG_FLOOR.ln()));
    }

    #[test]
    fn ten_seconds_gives_313_frames() {
        let mel = compute_mel(&AudioClip::silence(10.0, 16000), MelParams::default()).unwrap();
        assert_eq!(mel.frames, 160000 / 512 + 1);
        assert_eq!(mel.frames, 313);
        assert_eq!(mel.data.len(), 313 * 80);
    }

    /// Expected bin from the triangle edges alone: the filter whose triangle
    /// response at 440 Hz is largest.
    fn expected_bin(freq: f64, bins: usize, sr: u32) -> usize {
        let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
        let top = mel(sr as f64 / 2.0);
        let edge = |i: usize| {
            let m = top * i as f64 / (bins + 1) as f64;
            700.0 * (10f64.powf(m / 2595.0) - 1.0)
        };
        (0..bins)
            .max_by(|&a, &b| {
                let resp = |m: usize| {
                    let (lo, mid, hi) = (edge(m), edge(m + 1), edge(m + 2));
                    ((freq - lo) / (mid - lo)).min((hi - freq) / (hi - mid)).max(0.0)
                };
                resp(a).partial_cmp(&resp(b)).unwrap()
            })
            .unwrap()
    }

    #[test]
    fn sine_energy_lands_in_its_mel_bin() {
        let want = expected_bin(440.0, 80, 16000);
        for phase in [0.0, 0.7, 2.1] {
            let mel = compute_mel(&sine(440.0, 1.0, 16000, phase), MelParams::default()).unwrap();
            let mid = mel.row(mel.frames / 2);
            let argmax = (0..mel.mel_bins)
                .max_by(|&a, &b| mid[a].partial_cmp(&mid[b]).unwrap())
                .unwrap();
            assert_eq!(argmax, want, "phase {phase}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let empty = AudioClip::new(vec![], 16000).unwrap();
        assert!(compute_mel(&empty, MelParams::default()).is_err());
        let p = MelParams {
            fft_size: 256,
            hop_length: 512,
            mel_bins: 40,
        };
        assert!(compute_mel(&AudioClip::silence(1.0, 16000), p).is_err());
    }

    #[test]
    fn deterministic() {
        let a = sine(300.0, 0.5, 8000, 0.3);
        let p = MelParams {
            fft_size: 512,
            hop_length: 128,
            mel_bins: 40,
        };
        assert_eq!(compute_mel(&a, p).unwrap(), compute_mel(&a, p).unwrap());
    }
}
