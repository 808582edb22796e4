//! Shared domain types for the emotion-transition gesture toolkit.
//!
//! Everything in this crate is plain data plus the persistence formats that
//! the other crates and the `emogest` CLI agree on: pose files, sample
//! directories, run configuration and checkpoint metadata. Audio feature
//! extraction (STFT + mel filterbank) also lives here because it is a pure
//! function of an [`AudioClip`] and is needed by both training and metrics.

pub mod audio;
pub mod checkpoint;
pub mod config;
pub mod emotion;
pub mod error;
pub mod layout;
pub mod mel;
pub mod pose;
pub mod sample;
pub mod skeleton;

pub use audio::AudioClip;
pub use checkpoint::CheckpointMeta;
pub use config::RunConfig;
pub use emotion::{EmotionLabel, EmotionVocab};
pub use error::{CoreError, Result};
pub use layout::SegmentLayout;
pub use mel::MelSpectrogram;
pub use pose::PoseSequence;
pub use sample::EmotionTransitionSample;
pub use skeleton::SkeletonSpec;
