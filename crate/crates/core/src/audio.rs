use std::path::Path;

use crate::error::{CoreError, Result};

/// Mono waveform with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// How [`AudioClip::fit_to_duration`] changed a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationFit {
    Unchanged,
    Padded { samples: usize },
    Cropped { samples: usize },
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(CoreError::Audio("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(CoreError::Audio(format!("non-finite sample at {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(secs: f64, sample_rate: u32) -> Self {
        let n = (secs * sample_rate as f64).round() as usize;
        Self {
            samples: vec![0.0; n],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sub-clip between two times in seconds.
    pub fn window(&self, start_secs: f64, end_secs: f64) -> Self {
        let sr = self.sample_rate as f64;
        let a = ((start_secs * sr).round() as usize).min(self.len());
        let b = ((end_secs * sr).round() as usize).clamp(a, self.len());
        Self {
            samples: self.samples[a..b].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn concat(parts: &[&AudioClip]) -> Result<Self> {
        let sr = parts
            .first()
            .ok_or_else(|| CoreError::Audio("nothing to concatenate".into()))?
            .sample_rate;
        if parts.iter().any(|p| p.sample_rate != sr) {
            return Err(CoreError::Audio("sample rate mismatch in concat".into()));
        }
        Ok(Self {
            samples: parts.iter().flat_map(|p| p.samples.iter().copied()).collect(),
            sample_rate: sr,
        })
    }

    /// Linear-interpolation resampling.
    pub fn resample(&self, target_rate: u32) -> Result<Self> {
        if target_rate == 0 {
            return Err(CoreError::Audio("target sample rate must be positive".into()));
        }
        if target_rate == self.sample_rate || self.samples.is_empty() {
            return Ok(Self {
                samples: self.samples.clone(),
                sample_rate: target_rate,
            });
        }
        let ratio = self.sample_rate as f64 / target_rate as f64;
        let out_len = ((self.len() as f64) / ratio).round().max(1.0) as usize;
        let last = self.len() - 1;
        let samples = (0..out_len)
            .map(|i| {
                let pos = i as f64 * ratio;
                let lo = (pos.floor() as usize).min(last);
                let hi = (lo + 1).min(last);
                let w = pos - lo as f64;
                self.samples[lo] * (1.0 - w) + self.samples[hi] * w
            })
            .collect();
        Ok(Self {
            samples,
            sample_rate: target_rate,
        })
    }

    /// Zero-pads at the end or center-crops so the clip lasts exactly `secs`.
    pub fn fit_to_duration(&self, secs: f64) -> (Self, DurationFit) {
        let target = (secs * self.sample_rate as f64).round() as usize;
        let n = self.len();
        let (samples, fit) = if n == target {
            (self.samples.clone(), DurationFit::Unchanged)
        } else if n < target {
            let mut s = self.samples.clone();
            s.resize(target, 0.0);
            (s, DurationFit::Padded { samples: target - n })
        } else {
            let start = (n - target) / 2;
            (
                self.samples[start..start + target].to_vec(),
                DurationFit::Cropped { samples: n - target },
            )
        };
        (
            Self {
                samples,
                sample_rate: self.sample_rate,
            },
            fit,
        )
    }

    /// Writes 32-bit float mono PCM.
    pub fn save_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let wav_err = |e: hound::Error| CoreError::format(path, e.to_string());
        let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
        for s in &self.samples {
            w.write_sample(*s as f32).map_err(wav_err)?;
        }
        w.finalize().map_err(wav_err)
    }

    /// Reads integer or float PCM; multi-channel input is averaged to mono.
    pub fn load_wav(path: &Path) -> Result<Self> {
        let wav_err = |e: hound::Error| CoreError::format(path, e.to_string());
        let mut r = hound::WavReader::open(path).map_err(wav_err)?;
        let spec = r.spec();
        let interleaved: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Float => r
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?,
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
                r.samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(wav_err)?
            }
        };
        let ch = spec.channels.max(1) as usize;
        let samples = interleaved
            .chunks(ch)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        Self::new(samples, spec.sample_rate)
    }

    /// Loads a wave file and resamples it to `rate`.
    pub fn load_wav_at(path: &Path, rate: u32) -> Result<Self> {
        Self::load_wav(path)?.resample(rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_pads_and_crops() {
        let a = AudioClip::new(vec![1.0; 10], 10).unwrap();
        let (p, fit) = a.fit_to_duration(1.5);
        assert_eq!(p.len(), 15);
        assert_eq!(fit, DurationFit::Padded { samples: 5 });
        assert_eq!(&p.samples[10..], &[0.0; 5]);
        let b = AudioClip::new((0..10).map(f64::from).collect(), 10).unwrap();
        let (c, fit) = b.fit_to_duration(0.4);
        assert_eq!(c.samples, vec![3.0, 4.0, 5.0, 6.0]);
        assert_eq!(fit, DurationFit::Cropped { samples: 6 });
    }

    #[test]
    fn resample_preserves_duration() {
        let a = AudioClip::new(vec![0.5; 22050], 22050).unwrap();
        let b = a.resample(16000).unwrap();
        assert_eq!(b.len(), 16000);
        assert!(b.samples.iter().all(|s| (*s - 0.5).abs() < 1e-12));
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let a = AudioClip::new(vec![0.25, -0.5, 0.0, 1.0], 8000).unwrap();
        a.save_wav(&path).unwrap();
        let b = AudioClip::load_wav(&path).unwrap();
        assert_eq!(a, b);
    }
}
