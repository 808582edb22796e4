//! Checkpoint metadata.
//!
//! A checkpoint directory contains `weights.safetensors` (named parameter
//! map, float64) and `checkpoint.json` with the fields of [`CheckpointMeta`].
//! The full run config is embedded so a checkpoint is self-describing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::emotion::EmotionVocab;
use crate::error::{CoreError, Result};

pub const META_FILE: &str = "checkpoint.json";
pub const WEIGHTS_FILE: &str = "weights.safetensors";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Generator,
    Classifier,
    Sampler,
    FgdExtractor,
}

impl CheckpointKind {
    pub fn stage_name(self) -> &'static str {
        match self {
            Self::Generator => "train",
            Self::Classifier => "pretrain-classifier",
            Self::Sampler => "pretrain-sampler",
            Self::FgdExtractor => "pretrain-fgd-extractor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub kind: CheckpointKind,
    pub config_hash: String,
    pub seed: u64,
    /// Emotion vocabulary the weights were trained against.
    pub emotions: EmotionVocab,
    /// Whether the weights went through their training stage.
    pub trained: bool,
    pub epochs_completed: usize,
    pub config: RunConfig,
    /// Stage-specific report (accuracies, losses, ...).
    #[serde(default)]
    pub report: serde_json::Value,
}

impl CheckpointMeta {
    pub fn new(kind: CheckpointKind, config: &RunConfig, trained: bool) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind,
            config_hash: config.hash(),
            seed: config.seed,
            emotions: config.emotions.clone(),
            trained,
            epochs_completed: 0,
            config: config.clone(),
            report: serde_json::Value::Null,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
        let path = dir.join(META_FILE);
        let json = serde_json::to_string_pretty(self).expect("checkpoint meta serializes");
        std::fs::write(&path, json).map_err(|e| CoreError::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
        let meta: Self =
            serde_json::from_str(&text).map_err(|e| CoreError::format(&path, e.to_string()))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(CoreError::format(
                &path,
                format!("unsupported checkpoint version {}", meta.format_version),
            ));
        }
        Ok(meta)
    }

    /// Loads and checks the checkpoint kind.
    pub fn load_kind(dir: &Path, kind: CheckpointKind) -> Result<Self> {
        let meta = Self::load(dir)?;
        if meta.kind != kind {
            return Err(CoreError::format(
                dir.join(META_FILE),
                format!("expected a {kind:?} checkpoint, found {:?}", meta.kind),
            ));
        }
        Ok(meta)
    }
}
