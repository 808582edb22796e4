use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use emogest_core::checkpoint::CheckpointKind;
use emogest_core::{PoseSequence, RunConfig};
use emogest_data::adapters::MockAdapters;
use emogest_data::corpus::read_clips;
use emogest_data::http::adapters_from_env;
use emogest_data::{build_corpus, synthesize_toy_corpus, write_corpus, BuildContext, CorpusOptions, PipelineConfig, SynthConfig};
use emogest_eval::extractor::{extractor_chunks, PREFIX as FGD_PREFIX};
use emogest_eval::{evaluate, pretrain_fgd_extractor, EvalInputs, FgdExtractor};
use emogest_model::classifier::{classifier_windows, pretrain_classifier, EmotionClassifier};
use emogest_model::params::derive_seed;
use emogest_model::sampler::{pretrain_sampler, KeyframeSampler};
use emogest_model::training::{generate, prepare_samples, save_generator_checkpoint, train, GanModules, TrainOptions};
use emogest_model::ParamStore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::{EvaluateArgs, GenerateArgs, Preset, PrepareArgs, RenderArgs, SplitArg, StageArgs, TrainArgs};
use crate::exit::validation;
use crate::render::render_sequence;
use crate::stage::*;

pub const CONFIG_FILE: &str = "config.toml";
pub const REPORT_FILE: &str = "report.json";
pub const GENERATION_FILE: &str = "generation.json";

pub fn init_config(preset: Preset, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::preset(preset.name())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    fresh_file(out)?;
    cfg.save(out)?;
    println!("wrote {} preset to {} (config hash {})", preset.name(), out.display(), cfg.hash());
    Ok(())
}

pub fn prepare_data(args: &PrepareArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    if !(0.0..1.0).contains(&args.test_fraction) {
        return Err(validation(format!("--test-fraction {} outside [0, 1)", args.test_fraction)));
    }
    let (corpus, source) = if args.synthetic {
        let mut sc = SynthConfig::from_run(&cfg, args.speakers, args.samples.unwrap_or(200));
        sc.test_fraction = args.test_fraction;
        (synthesize_toy_corpus(&sc)?, "synthetic")
    } else {
        let dir = args.clips.as_deref().ok_or_else(|| validation("--clips is required"))?;
        if !dir.is_dir() {
            return Err(validation(format!("clip directory {} does not exist", dir.display())));
        }
        let clips = read_clips(dir)?;
        let (adapters, source) = if args.mock_adapters {
            (MockAdapters::default().build(), "mock")
        } else {
            (adapters_from_env().map_err(|e| validation(e.to_string()))?, "http")
        };
        let pipeline = PipelineConfig::default();
        let ctx = BuildContext {
            cfg: &pipeline,
            layout: &cfg.layout,
            vocab: &cfg.emotions,
            seed_frames: cfg.model.seed_frames,
            hop_secs: cfg.hop_secs(),
        };
        let opts = CorpusOptions {
            pairs_per_head: args.pairs_per_head,
            seed: cfg.seed,
            max_samples: args.samples,
            test_fraction: args.test_fraction,
            ..Default::default()
        };
        (build_corpus(&ctx, clips, &adapters, &opts)?, source)
    };
    fresh_dir(&args.out)?;
    let info = write_corpus(&args.out, &corpus, source, cfg.seed, cfg.emotions.names())?;
    cfg.save(&args.out.join(CONFIG_FILE))?;
    let s = &info.summary;
    println!(
        "{source} corpus at {}: {} train / {} test samples; {} pairs attempted, {} accepted, {} rejected",
        args.out.display(),
        info.train_samples,
        info.test_samples,
        s.attempted,
        s.accepted,
        s.rejected
    );
    for note in &info.notes {
        log::info!("{note}");
    }
    Ok(())
}

fn train_split(args: &StageArgs) -> Result<(RunConfig, Vec<emogest_core::EmotionTransitionSample>)> {
    let cfg = load_config(args.config.as_deref())?;
    let corpus = load_corpus(&args.data, &cfg)?;
    let train = corpus.split(SplitArg::Train);
    require_samples(&train, "training")?;
    Ok((cfg, train))
}

fn finish_stage(args: &StageArgs, kind: CheckpointKind, cfg: &RunConfig, store: &ParamStore, epochs: usize, report: &impl Serialize) -> Result<()> {
    let value = serde_json::to_value(report)?;
    save_checkpoint(&args.out, kind, cfg, store, epochs, value)?;
    write_json(&args.out.join(REPORT_FILE), report)?;
    cfg.save(&args.out.join(CONFIG_FILE))?;
    Ok(())
}

pub fn pretrain_classifier_stage(args: &StageArgs) -> Result<()> {
    let (cfg, train) = train_split(args)?;
    let windows = classifier_windows(&train, cfg.layout.head_frames)?;
    fresh_dir(&args.out)?;
    let store = ParamStore::new(cfg.seed);
    let (_, report) = pretrain_classifier(&cfg, &store, &windows)?;
    finish_stage(args, CheckpointKind::Classifier, &cfg, &store, cfg.classifier.epochs, &report)?;
    println!(
        "classifier: train accuracy {:.3} on {} windows -> {}",
        report.train_accuracy,
        windows.len(),
        args.out.display()
    );
    Ok(())
}

pub fn pretrain_sampler_stage(args: &StageArgs) -> Result<()> {
    let (cfg, train) = train_split(args)?;
    fresh_dir(&args.out)?;
    let store = ParamStore::new(cfg.seed);
    let (_, report) = pretrain_sampler(&cfg, &store, &train)?;
    finish_stage(args, CheckpointKind::Sampler, &cfg, &store, cfg.sampler.epochs, &report)?;
    println!(
        "sampler: L1 {:.4} -> {:.4}, KL {:.3e} -> {}",
        report.initial_l1,
        report.final_l1,
        report.final_kl,
        args.out.display()
    );
    Ok(())
}

pub fn pretrain_fgd_stage(args: &StageArgs) -> Result<()> {
    let (cfg, train) = train_split(args)?;
    let chunks = extractor_chunks(&train, cfg.layout.transition_frames);
    fresh_dir(&args.out)?;
    let store = ParamStore::new(cfg.seed);
    let (_, report) = pretrain_fgd_extractor(&cfg, &store, &chunks)?;
    finish_stage(args, CheckpointKind::FgdExtractor, &cfg, &store, cfg.eval.fgd_epochs, &report)?;
    println!(
        "fgd extractor: L1 {:.4} -> {:.4} on {} chunks -> {}",
        report.initial_l1,
        report.final_l1,
        report.chunks,
        args.out.display()
    );
    Ok(())
}

/// Modules must agree on what a sample looks like.
fn check_compatible(cfg: &RunConfig, other: &RunConfig, what: &str) -> Result<()> {
    if cfg.layout != other.layout || cfg.skeleton != other.skeleton || cfg.emotions != other.emotions {
        return Err(validation(format!(
            "{what} checkpoint was trained with a different layout, skeleton or emotion set"
        )));
    }
    Ok(())
}

fn load_classifier(dir: &Path, cfg: &RunConfig) -> Result<(EmotionClassifier, ParamStore)> {
    let (meta, store) = load_checkpoint(dir, CheckpointKind::Classifier)?;
    check_compatible(cfg, &meta.config, "classifier")?;
    let clf = EmotionClassifier::new(&meta.config, &store.frozen_builder().pp("classifier"))?;
    Ok((clf, store))
}

fn load_sampler(dir: &Path, cfg: &RunConfig) -> Result<KeyframeSampler> {
    let (meta, store) = load_checkpoint(dir, CheckpointKind::Sampler)?;
    check_compatible(cfg, &meta.config, "sampler")?;
    let mut sampler = KeyframeSampler::new(&meta.config, &store.frozen_builder().pp("sampler"))?;
    sampler.set_trained(meta.trained);
    Ok(sampler)
}

fn load_extractor(dir: &Path, cfg: &RunConfig) -> Result<FgdExtractor> {
    let (meta, store) = load_checkpoint(dir, CheckpointKind::FgdExtractor)?;
    check_compatible(cfg, &meta.config, "FGD extractor")?;
    Ok(FgdExtractor::new(&meta.config, &store.frozen_builder().pp(FGD_PREFIX))?)
}

pub fn train_stage(args: &TrainArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let (classifier, clf_store) = load_classifier(&args.classifier, &cfg)?;
    let sampler = load_sampler(&args.sampler, &cfg)?;
    load_extractor(&args.fgd_extractor, &cfg)?;
    let corpus = load_corpus(&args.data, &cfg)?;
    let train_samples = corpus.split(SplitArg::Train);
    require_samples(&train_samples, "training")?;
    let prepared = prepare_samples(&train_samples, &cfg)?;

    fresh_dir(&args.out)?;
    let checksum = clf_store.checksum();
    let record = StageRecord {
        classifier: absolute(&args.classifier),
        sampler: absolute(&args.sampler),
        fgd_extractor: absolute(&args.fgd_extractor),
        classifier_checksum: checksum.clone(),
    };
    write_json(&args.out.join(STAGES_FILE), &record)?;
    cfg.save(&args.out.join(CONFIG_FILE))?;

    let store = ParamStore::new(cfg.seed);
    let modules = GanModules::new(&cfg, &store)?;
    let opts = TrainOptions {
        epochs: args.epochs,
        out_dir: Some(args.out.clone()),
    };
    let history = train(&cfg, &store, &modules, &prepared, &classifier, &sampler, &opts)?;
    if clf_store.checksum() != checksum {
        anyhow::bail!("classifier weights changed during training");
    }
    let report = serde_json::json!({ "history": history, "stages": record });
    save_generator_checkpoint(&args.out.join(FINAL_DIR), &cfg, &store, history.len(), report)?;
    match (history.first(), history.last()) {
        (Some(a), Some(b)) => println!(
            "trained {} epochs: L_rec {:.4} -> {:.4}, L_emotion {:.4} -> {:.4} -> {}",
            history.len(),
            a.l_rec,
            b.l_rec,
            a.l_emotion,
            b.l_emotion,
            args.out.display()
        ),
        _ => println!("saved initial weights (0 epochs) -> {}", args.out.display()),
    }
    Ok(())
}

struct Loaded {
    dir: PathBuf,
    cfg: RunConfig,
    modules: GanModules,
    record: Option<StageRecord>,
}

fn load_generator(path: &Path) -> Result<Loaded> {
    let dir = resolve_generator_dir(path);
    let (meta, store) = load_checkpoint(&dir, CheckpointKind::Generator)?;
    let cfg = meta.config;
    let modules = GanModules::new(&cfg, &store)?;
    let record = find_stage_record(&dir)?;
    Ok(Loaded {
        dir,
        cfg,
        modules,
        record,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedFile {
    pub sample_id: String,
    pub seed: u64,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub checkpoint: PathBuf,
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<GeneratedFile>,
}

pub fn generate_stage(args: &GenerateArgs) -> Result<()> {
    let g = load_generator(&args.checkpoint)?;
    let sampler_dir = stage_path(args.sampler.as_deref(), g.record.as_ref(), |r| &r.sampler, "pretrain-sampler", &g.dir)?;
    let sampler = load_sampler(&sampler_dir, &g.cfg)?;
    let corpus = load_corpus(&args.data, &g.cfg)?;
    let mut samples = corpus.split(args.split);
    if let Some(n) = args.limit {
        samples.truncate(n);
    }
    require_samples(&samples, "selected")?;
    let prepared = prepare_samples(&samples, &g.cfg)?;
    let refs: Vec<_> = prepared.iter().collect();
    let seeds: Vec<u64> = prepared.iter().map(|p| derive_seed(args.seed, &p.sample_id)).collect();
    let sequences = generate(&g.cfg, &g.modules.generator, &sampler, &refs, &seeds)?;

    fresh_dir(&args.out)?;
    let skeleton = Arc::new(g.cfg.skeleton.clone());
    let mut files = Vec::with_capacity(sequences.len());
    for ((p, seq), &seed) in prepared.iter().zip(sequences).zip(&seeds) {
        let name = format!("{}.pose", p.sample_id);
        let path = args.out.join(&name);
        PoseSequence::new(seq, skeleton.clone())?.save(&path)?;
        let bytes = std::fs::read(&path).with_context(|| format!("reading back {}", path.display()))?;
        files.push(GeneratedFile {
            sample_id: p.sample_id.clone(),
            seed,
            file: name,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = GenerationManifest {
        checkpoint: absolute(&g.dir),
        config_hash: g.cfg.hash(),
        seed: args.seed,
        files,
    };
    write_json(&args.out.join(GENERATION_FILE), &manifest)?;
    println!("generated {} sequences -> {}", manifest.files.len(), args.out.display());
    Ok(())
}

pub fn evaluate_stage(args: &EvaluateArgs) -> Result<()> {
    let g = load_generator(&args.checkpoint)?;
    let rec = g.record.as_ref();
    let clf_dir = stage_path(args.classifier.as_deref(), rec, |r| &r.classifier, "pretrain-classifier", &g.dir)?;
    let sampler_dir = stage_path(args.sampler.as_deref(), rec, |r| &r.sampler, "pretrain-sampler", &g.dir)?;
    let fgd_dir = stage_path(args.fgd_extractor.as_deref(), rec, |r| &r.fgd_extractor, "pretrain-fgd-extractor", &g.dir)?;
    let (classifier, _) = load_classifier(&clf_dir, &g.cfg)?;
    let sampler = load_sampler(&sampler_dir, &g.cfg)?;
    let extractor = load_extractor(&fgd_dir, &g.cfg)?;
    let corpus = load_corpus(&args.data, &g.cfg)?;
    let test = corpus.split(SplitArg::Test);
    require_samples(&test, "test")?;
    fresh_file(&args.report)?;
    let inputs = EvalInputs {
        cfg: &g.cfg,
        generator: &g.modules.generator,
        sampler: &sampler,
        classifier: &classifier,
        extractor: &extractor,
        samples: &test,
    };
    let report = evaluate(&inputs, args.seed)?;
    report.save(&args.report)?;
    println!(
        "FGD_h+t {:.4}  FGD_trans {:.4}  BC {:.4}  Diversity {:.4} [{:.4}, {:.4}]  EmoACC {:.1}% -> {}",
        report.fgd_ht.value,
        report.fgd_trans.value,
        report.bc,
        report.diversity.mean,
        report.diversity.ci_low,
        report.diversity.ci_high,
        report.emo_acc,
        args.report.display()
    );
    Ok(())
}

pub fn render_stage(args: &RenderArgs) -> Result<()> {
    if args.size < 16 {
        return Err(validation("--size must be at least 16 pixels"));
    }
    let poses = PoseSequence::load(&args.poses).map_err(|e| validation(e.to_string()))?;
    fresh_dir(&args.out)?;
    let r = render_sequence(&poses, &args.out, args.size, args.gif, args.keyframes)?;
    println!("rendered {} frames -> {}", r.frames.len(), args.out.display());
    Ok(())
}
