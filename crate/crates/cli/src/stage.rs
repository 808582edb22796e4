//! Stage directories, configs, corpora and checkpoints on disk.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use emogest_core::checkpoint::{CheckpointKind, META_FILE, WEIGHTS_FILE};
use emogest_core::sample::{load_samples, Split};
use emogest_core::{CheckpointMeta, EmotionTransitionSample, RunConfig};
use emogest_data::corpus::{read_info, INFO_FILE, SAMPLES_DIR};
use emogest_data::CorpusInfo;
use emogest_model::ParamStore;
use serde::{Deserialize, Serialize};

use crate::args::SplitArg;
use crate::exit::{validation, MissingPrerequisite};

/// Records which pretrained checkpoints a training run used.
pub const STAGES_FILE: &str = "stages.json";
pub const FINAL_DIR: &str = "final";

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::toy(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Creates `dir`, refusing one that already has content.
pub fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
        if entries.next().is_some() {
            return Err(validation(format!(
                "{} already exists and is not empty; stage outputs are write-once",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

/// Refuses to overwrite an existing file.
pub fn fresh_file(path: &Path) -> Result<()> {
    if path.exists() {
        return Err(validation(format!("{} already exists; outputs are write-once", path.display())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub struct Corpus {
    pub info: CorpusInfo,
    pub samples: Vec<EmotionTransitionSample>,
}

impl Corpus {
    pub fn split(&self, which: SplitArg) -> Vec<EmotionTransitionSample> {
        self.samples
            .iter()
            .filter(|s| match which {
                SplitArg::All => true,
                SplitArg::Train => s.split == Split::Train,
                SplitArg::Test => s.split == Split::Test,
            })
            .cloned()
            .collect()
    }
}

/// Loads a prepared corpus and checks it against the config's vocabulary.
pub fn load_corpus(dir: &Path, cfg: &RunConfig) -> Result<Corpus> {
    if !dir.join(INFO_FILE).is_file() {
        return Err(MissingPrerequisite {
            stage: "prepare-data",
            path: dir.to_path_buf(),
            detail: format!("no {INFO_FILE}"),
        }
        .into());
    }
    let info = read_info(dir)?;
    if info.emotions != cfg.emotions.names() {
        return Err(validation(format!(
            "corpus emotions {:?} differ from config emotions {:?}",
            info.emotions,
            cfg.emotions.names()
        )));
    }
    let samples_dir = dir.join(SAMPLES_DIR);
    let samples = if samples_dir.is_dir() {
        load_samples(&samples_dir, cfg.audio.sample_rate)?
    } else {
        Vec::new()
    };
    for s in &samples {
        s.validate(&cfg.layout, &cfg.emotions, cfg.hop_secs())
            .with_context(|| format!("sample {}", s.sample_id))?;
    }
    Ok(Corpus { info, samples })
}

pub fn require_samples(samples: &[EmotionTransitionSample], what: &str) -> Result<()> {
    if samples.is_empty() {
        return Err(validation(format!("the corpus has no {what} samples")));
    }
    Ok(())
}

pub fn save_checkpoint(
    dir: &Path,
    kind: CheckpointKind,
    cfg: &RunConfig,
    store: &ParamStore,
    epochs: usize,
    report: serde_json::Value,
) -> Result<()> {
    store.save(&dir.join(WEIGHTS_FILE))?;
    let mut meta = CheckpointMeta::new(kind, cfg, true);
    meta.epochs_completed = epochs;
    meta.report = report;
    meta.save(dir)?;
    Ok(())
}

/// Loads a checkpoint of `kind`; a missing or untrained one names the stage
/// that produces it.
pub fn load_checkpoint(dir: &Path, kind: CheckpointKind) -> Result<(CheckpointMeta, ParamStore)> {
    let missing = |detail: String| MissingPrerequisite {
        stage: kind.stage_name(),
        path: dir.to_path_buf(),
        detail,
    };
    if !dir.join(META_FILE).is_file() || !dir.join(WEIGHTS_FILE).is_file() {
        return Err(missing(format!("no {META_FILE} / {WEIGHTS_FILE}")).into());
    }
    let meta = CheckpointMeta::load_kind(dir, kind)?;
    if !meta.trained && kind != CheckpointKind::Generator {
        return Err(missing("checkpoint was never trained".into()).into());
    }
    let store = ParamStore::load(&dir.join(WEIGHTS_FILE), meta.seed)?;
    Ok((meta, store))
}

/// Paths of the pretrained checkpoints used by a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub classifier: PathBuf,
    pub sampler: PathBuf,
    pub fgd_extractor: PathBuf,
    pub classifier_checksum: String,
}

/// A train output directory resolves to its final checkpoint; a checkpoint
/// directory resolves to itself.
pub fn resolve_generator_dir(path: &Path) -> PathBuf {
    if path.join(META_FILE).is_file() {
        path.to_path_buf()
    } else {
        path.join(FINAL_DIR)
    }
}

/// Finds the stage record in `dir` or up to two levels above it.
pub fn find_stage_record(dir: &Path) -> Result<Option<StageRecord>> {
    for d in dir.ancestors().take(3) {
        let p = d.join(STAGES_FILE);
        if p.is_file() {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            return Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?));
        }
    }
    Ok(None)
}

/// Explicit path if given, otherwise the one recorded by train.
pub fn stage_path(
    explicit: Option<&Path>,
    record: Option<&StageRecord>,
    pick: fn(&StageRecord) -> &PathBuf,
    stage: &'static str,
    checkpoint: &Path,
) -> Result<PathBuf> {
    match (explicit, record) {
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(r)) => Ok(pick(r).clone()),
        (None, None) => Err(MissingPrerequisite {
            stage,
            path: checkpoint.to_path_buf(),
            detail: format!("no {STAGES_FILE} next to the checkpoint and no explicit path"),
        }
        .into()),
    }
}

pub fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}
