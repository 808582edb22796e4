//! Corpus assembly from clips and its on-disk layout.
//!
//! ```text
//! <dir>/corpus.json      CorpusInfo
//! <dir>/manifest.jsonl   one ManifestRecord per attempted pair
//! <dir>/clips/<id>/      source clips referenced by the manifest
//! <dir>/samples/<id>/    accepted samples
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use emogest_core::sample::{SampleMeta, Split};
use emogest_core::EmotionTransitionSample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapters::Adapters;
use crate::clip::SourceClip;
use crate::error::{DataError, Result};
use crate::pairing::{default_exclusions, pair_clips};
use crate::pipeline::{run_pairs, BuildContext, ManifestRecord, ManifestSummary, ManifestWriter};

pub const FORMAT_VERSION: u32 = 1;
pub const INFO_FILE: &str = "corpus.json";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CLIPS_DIR: &str = "clips";
pub const SAMPLES_DIR: &str = "samples";

#[derive(Debug, Clone)]
pub struct Corpus {
    pub clips: Vec<SourceClip>,
    pub samples: Vec<(EmotionTransitionSample, SampleMeta)>,
    pub manifest: Vec<ManifestRecord>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub format_version: u32,
    /// `synthetic`, `mock` or `http`.
    pub source: String,
    pub seed: u64,
    pub emotions: Vec<String>,
    pub clips: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub summary: ManifestSummary,
    pub notes: Vec<String>,
}

/// Options for [`build_corpus`].
#[derive(Debug, Clone)]
pub struct CorpusOptions {
    pub pairs_per_head: Option<usize>,
    pub exclusions: Vec<(String, String)>,
    pub seed: u64,
    pub max_samples: Option<usize>,
    pub test_fraction: f64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            pairs_per_head: None,
            exclusions: default_exclusions(),
            seed: 0,
            max_samples: None,
            test_fraction: 0.2,
        }
    }
}

/// Pairs clips, builds transitions in a seeded order and marks a seeded
/// fraction of the accepted samples as test.
pub fn build_corpus(
    ctx: &BuildContext,
    clips: Vec<SourceClip>,
    adapters: &Adapters,
    opts: &CorpusOptions,
) -> Result<Corpus> {
    if !(0.0..1.0).contains(&opts.test_fraction) {
        return Err(DataError::Invalid(format!("test fraction {} outside [0, 1)", opts.test_fraction)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut pairs, mut notes) = pair_clips(&clips, opts.pairs_per_head, &opts.exclusions, rng.gen())?;
    pairs.shuffle(&mut rng);
    let outcomes = run_pairs(ctx, &clips, &pairs, adapters, opts.max_samples);
    let manifest: Vec<ManifestRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let mut samples: Vec<_> = outcomes.into_iter().filter_map(|o| o.sample).collect();
    if let Some(want) = opts.max_samples {
        if samples.len() < want {
            notes.push(format!("only {} of {want} samples could be built", samples.len()));
        }
    }
    let n_test = (samples.len() as f64 * opts.test_fraction).round() as usize;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    for &i in &order[..n_test] {
        samples[i].0.split = Split::Test;
        samples[i].1.split = Split::Test;
    }
    Ok(Corpus {
        clips,
        samples,
        manifest,
        notes,
    })
}

/// Writes the corpus into `dir`, which must not exist or be empty.
pub fn write_corpus(dir: &Path, corpus: &Corpus, source: &str, seed: u64, emotions: &[String]) -> Result<CorpusInfo> {
    if dir.exists() && dir.read_dir().map_err(|e| DataError::io(dir, e))?.next().is_some() {
        return Err(DataError::Invalid(format!(
            "{} already exists and is not empty; corpus directories are write-once",
            dir.display()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let referenced: BTreeSet<&str> = corpus
        .manifest
        .iter()
        .flat_map(|r| [r.head_clip.as_str(), r.tail_clip.as_str()])
        .collect();
    let mut clip_count = 0;
    for clip in corpus.clips.iter().filter(|c| referenced.contains(c.clip_id.as_str())) {
        clip.save_dir(&dir.join(CLIPS_DIR).join(&clip.clip_id))?;
        clip_count += 1;
    }
    for (sample, meta) in &corpus.samples {
        sample.save_dir(&dir.join(SAMPLES_DIR).join(&sample.sample_id), meta)?;
    }
    let mut writer = ManifestWriter::open(&dir.join(MANIFEST_FILE))?;
    for r in &corpus.manifest {
        writer.append(r)?;
    }
    let test = corpus.samples.iter().filter(|s| s.0.split == Split::Test).count();
    let info = CorpusInfo {
        format_version: FORMAT_VERSION,
        source: source.into(),
        seed,
        emotions: emotions.to_vec(),
        clips: clip_count,
        train_samples: corpus.samples.len() - test,
        test_samples: test,
        summary: ManifestSummary::from_records(&corpus.manifest),
        notes: corpus.notes.clone(),
    };
    let path = dir.join(INFO_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&info).expect("corpus info serializes"))
        .map_err(|e| DataError::io(&path, e))?;
    Ok(info)
}

pub fn read_info(dir: &Path) -> Result<CorpusInfo> {
    let path = dir.join(INFO_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
    let info: CorpusInfo =
        serde_json::from_str(&text).map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))?;
    if info.format_version != FORMAT_VERSION {
        return Err(DataError::Invalid(format!(
            "{}: format version {} (expected {FORMAT_VERSION})",
            path.display(),
            info.format_version
        )));
    }
    Ok(info)
}

/// Loads every clip directory under `dir` (each holding `clip.json`), sorted.
pub fn read_clips(dir: &Path) -> Result<Vec<SourceClip>> {
    let mut dirs: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| DataError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("clip.json").is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| SourceClip::load_dir(d)).collect()
}

#[cfg(test)]
mod tests {
    use emogest_core::{EmotionVocab, SegmentLayout};

    use super::*;
    use crate::pipeline::{read_manifest, PipelineConfig};
    use crate::synth::{synthesize_toy_corpus, SynthConfig};

    #[test]
    fn write_then_read_back() {
        let cfg = SynthConfig {
            emotions: EmotionVocab::beat_prefix(2).unwrap(),
            speakers: 1,
            samples: 4,
            seed: 1,
            sample_rate: 8000,
            layout: SegmentLayout::default(),
            seed_frames: 4,
            test_fraction: 0.25,
            hop_secs: 256.0 / 8000.0,
        };
        let corpus = synthesize_toy_corpus(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("corpus");
        let info = write_corpus(&out, &corpus, "synthetic", 1, cfg.emotions.names()).unwrap();
        assert_eq!(info.train_samples + info.test_samples, 4);
        assert!(info.summary.reconciles());
        assert_eq!(read_info(&out).unwrap(), info);
        assert_eq!(read_manifest(&out.join(MANIFEST_FILE)).unwrap(), corpus.manifest);
        let samples = emogest_core::sample::load_samples(&out.join(SAMPLES_DIR), 8000).unwrap();
        assert_eq!(samples.len(), 4);
        let clips = read_clips(&out.join(CLIPS_DIR)).unwrap();
        assert_eq!(clips.len(), info.clips);
        assert!(write_corpus(&out, &corpus, "synthetic", 1, cfg.emotions.names()).is_err());

        // Rebuilding from the stored clips with the same seed reproduces the manifest shape.
        let layout = SegmentLayout::default();
        let pc = PipelineConfig::default();
        let ctx = BuildContext {
            cfg: &pc,
            layout: &layout,
            vocab: &cfg.emotions,
            seed_frames: 4,
            hop_secs: cfg.hop_secs,
        };
        let adapters = crate::adapters::MockAdapters::default().build();
        let rebuilt = build_corpus(&ctx, clips, &adapters, &CorpusOptions::default()).unwrap();
        assert!(ManifestSummary::from_records(&rebuilt.manifest).reconciles());
    }
}
