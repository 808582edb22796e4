//! Run configuration.
//!
//! Stored as TOML with one table per subsystem (`[model]`, `[train]`,
//! `[sampler]`, ...), so every setting has a namespaced key such as
//! `train.lambda_r`. Seeds must fit in a signed 64-bit integer because TOML
//! integers are `i64`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::emotion::EmotionVocab;
use crate::error::{CoreError, Result};
use crate::layout::SegmentLayout;
use crate::mel::MelParams;
use crate::skeleton::SkeletonSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Fixed seeds and single-threaded reductions everywhere.
    pub deterministic: bool,
    pub layout: SegmentLayout,
    pub skeleton: SkeletonSpec,
    pub emotions: EmotionVocab,
    pub audio: AudioConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub classifier: ClassifierConfig,
    pub discriminator: DiscriminatorConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop_length: usize,
    pub mel_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature dimension `D`.
    pub feature_dim: usize,
    pub heads: usize,
    pub encoder_blocks: usize,
    pub decoder_blocks: usize,
    pub ffn_dim: usize,
    /// Channel width of the convolutional audio encoder.
    pub audio_channels: usize,
    /// Hidden width of the motion encoder that turns the composed
    /// correlation matrix into an AdaIN style.
    pub style_hidden: usize,
    /// Keep the AdaIN gain positive with softplus.
    pub positive_gain: bool,
    /// Number of seed frames `M`.
    pub seed_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_r: f64,
    pub lambda_adv: f64,
    pub learning_rate: f64,
    pub discriminator_learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub checkpoint_every: usize,
    /// Target for real samples in the discriminator loss.
    pub real_label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub beta_kl: f64,
    pub crossfade: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub channels: usize,
    /// Concatenate raw positions to the velocity features.
    pub raw_pose_channel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// FGD feature dimension `F`.
    pub fgd_feature_dim: usize,
    pub fgd_hidden: usize,
    pub fgd_epochs: usize,
    pub fgd_learning_rate: f64,
    pub fgd_batch_size: usize,
    pub bc_sigma: f64,
    pub diversity_pairs: usize,
    pub bootstrap_resamples: usize,
    pub generations_per_audio: usize,
    pub chunk_draws: usize,
}

impl Default for RunConfig {
    /// Full-scale hyperparameters.
    fn default() -> Self {
        Self {
            seed: 0,
            deterministic: true,
            layout: SegmentLayout::default(),
            skeleton: SkeletonSpec::upper_body_8(),
            emotions: EmotionVocab::beat(),
            audio: AudioConfig {
                sample_rate: 16000,
                fft_size: 1024,
                hop_length: 512,
                mel_bins: 80,
            },
            model: ModelConfig {
                feature_dim: 512,
                heads: 8,
                encoder_blocks: 3,
                decoder_blocks: 3,
                ffn_dim: 1024,
                audio_channels: 32,
                style_hidden: 256,
                positive_gain: true,
                seed_frames: 4,
            },
            train: TrainConfig {
                lambda_r: 20.0,
                lambda_adv: 2.0,
                learning_rate: 3e-4,
                discriminator_learning_rate: 3e-4,
                epochs: 100,
                batch_size: 96,
                grad_clip: 5.0,
                checkpoint_every: 10,
                real_label: 0.9,
            },
            sampler: SamplerConfig {
                latent_dim: 32,
                hidden: 256,
                beta_kl: 0.1,
                crossfade: 4,
                epochs: 100,
                learning_rate: 3e-4,
                batch_size: 96,
            },
            classifier: ClassifierConfig {
                dim: 512,
                heads: 8,
                blocks: 3,
                epochs: 50,
                learning_rate: 3e-4,
                batch_size: 96,
            },
            discriminator: DiscriminatorConfig {
                channels: 64,
                raw_pose_channel: false,
            },
            eval: EvalConfig {
                fgd_feature_dim: 128,
                fgd_hidden: 256,
                fgd_epochs: 100,
                fgd_learning_rate: 3e-4,
                fgd_batch_size: 96,
                bc_sigma: 0.1,
                diversity_pairs: 500,
                bootstrap_resamples: 1000,
                generations_per_audio: 5,
                chunk_draws: 5,
            },
        }
    }
}

impl RunConfig {
    /// Desk-scale preset: `D = 32`, eight joints, neutral plus four emotions.
    pub fn toy() -> Self {
        let base = Self::default();
        Self {
            seed: 7,
            emotions: EmotionVocab::beat_prefix(4).expect("4 extra emotions exist"),
            // Half the default rate and mel resolution keeps the convolutional
            // encoder cheap on one CPU core; 10 s still yields 157 mel frames.
            audio: AudioConfig {
                sample_rate: 8000,
                mel_bins: 40,
                ..base.audio
            },
            model: ModelConfig {
                feature_dim: 32,
                heads: 2,
                ffn_dim: 64,
                audio_channels: 8,
                style_hidden: 32,
                ..base.model
            },
            train: TrainConfig {
                learning_rate: 1e-3,
                discriminator_learning_rate: 3e-4,
                epochs: 20,
                batch_size: 8,
                checkpoint_every: 5,
                ..base.train
            },
            sampler: SamplerConfig {
                latent_dim: 8,
                hidden: 64,
                epochs: 60,
                learning_rate: 1e-3,
                batch_size: 32,
                ..base.sampler
            },
            classifier: ClassifierConfig {
                dim: 32,
                heads: 2,
                blocks: 2,
                epochs: 30,
                learning_rate: 1e-3,
                batch_size: 32,
            },
            discriminator: DiscriminatorConfig {
                channels: 16,
                raw_pose_channel: false,
            },
            eval: EvalConfig {
                fgd_feature_dim: 16,
                fgd_hidden: 64,
                fgd_epochs: 60,
                fgd_learning_rate: 1e-3,
                fgd_batch_size: 32,
                ..base.eval
            },
            ..base
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Self::toy()),
            "full" | "default" => Ok(Self::default()),
            other => Err(CoreError::Config(format!("unknown preset {other:?} (toy, full)"))),
        }
    }

    pub fn mel_params(&self) -> MelParams {
        MelParams {
            fft_size: self.audio.fft_size,
            hop_length: self.audio.hop_length,
            mel_bins: self.audio.mel_bins,
        }
    }

    /// One STFT hop in seconds.
    pub fn hop_secs(&self) -> f64 {
        self.audio.hop_length as f64 / self.audio.sample_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(CoreError::Config(format!("{what} must be positive")));
        self.layout.validate()?;
        self.skeleton.validate()?;
        if self.seed > i64::MAX as u64 {
            return Err(CoreError::Config("seed must fit in i64".into()));
        }
        let counts = [
            ("audio.sample_rate", self.audio.sample_rate as usize),
            ("audio.fft_size", self.audio.fft_size),
            ("audio.hop_length", self.audio.hop_length),
            ("audio.mel_bins", self.audio.mel_bins),
            ("model.feature_dim", self.model.feature_dim),
            ("model.heads", self.model.heads),
            ("model.encoder_blocks", self.model.encoder_blocks),
            ("model.decoder_blocks", self.model.decoder_blocks),
            ("model.ffn_dim", self.model.ffn_dim),
            ("model.audio_channels", self.model.audio_channels),
            ("model.style_hidden", self.model.style_hidden),
            ("model.seed_frames", self.model.seed_frames),
            ("train.batch_size", self.train.batch_size),
            ("train.checkpoint_every", self.train.checkpoint_every),
            ("sampler.latent_dim", self.sampler.latent_dim),
            ("sampler.hidden", self.sampler.hidden),
            ("sampler.batch_size", self.sampler.batch_size),
            ("classifier.dim", self.classifier.dim),
            ("classifier.heads", self.classifier.heads),
            ("classifier.blocks", self.classifier.blocks),
            ("classifier.batch_size", self.classifier.batch_size),
            ("discriminator.channels", self.discriminator.channels),
            ("eval.fgd_feature_dim", self.eval.fgd_feature_dim),
            ("eval.fgd_hidden", self.eval.fgd_hidden),
            ("eval.fgd_batch_size", self.eval.fgd_batch_size),
            ("eval.diversity_pairs", self.eval.diversity_pairs),
            ("eval.bootstrap_resamples", self.eval.bootstrap_resamples),
            ("eval.generations_per_audio", self.eval.generations_per_audio),
            ("eval.chunk_draws", self.eval.chunk_draws),
        ];
        for (name, v) in counts {
            if v == 0 {
                return bad(name);
            }
        }
        let reals = [
            ("train.lambda_r", self.train.lambda_r),
            ("train.lambda_adv", self.train.lambda_adv),
            ("train.learning_rate", self.train.learning_rate),
            ("train.discriminator_learning_rate", self.train.discriminator_learning_rate),
            ("train.grad_clip", self.train.grad_clip),
            ("train.real_label", self.train.real_label),
            ("sampler.beta_kl", self.sampler.beta_kl),
            ("sampler.learning_rate", self.sampler.learning_rate),
            ("classifier.learning_rate", self.classifier.learning_rate),
            ("eval.fgd_learning_rate", self.eval.fgd_learning_rate),
            ("eval.bc_sigma", self.eval.bc_sigma),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v > 0.0) {
                return bad(name);
            }
        }
        if self.train.real_label > 1.0 {
            return Err(CoreError::Config("train.real_label must be in (0, 1]".into()));
        }
        if self.model.feature_dim % self.model.heads != 0 {
            return Err(CoreError::Config("model.feature_dim must be divisible by model.heads".into()));
        }
        if self.classifier.dim % self.classifier.heads != 0 {
            return Err(CoreError::Config("classifier.dim must be divisible by classifier.heads".into()));
        }
        if self.audio.fft_size < self.audio.hop_length {
            return Err(CoreError::Config("audio.fft_size must be at least audio.hop_length".into()));
        }
        if self.model.seed_frames > self.layout.head_frames {
            return Err(CoreError::Config("model.seed_frames exceeds layout.head_frames".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CoreError::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| CoreError::io(path, e))
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }
}
