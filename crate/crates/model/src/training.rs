//! Objectives and the alternating generator/discriminator training loop.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::Tensor;
use emogest_core::checkpoint::{CheckpointKind, WEIGHTS_FILE};
use emogest_core::{CheckpointMeta, EmotionTransitionSample, RunConfig, SegmentLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio_encoder::mel_tensor;
use crate::classifier::EmotionClassifier;
use crate::discriminator::Discriminator;
use crate::error::{shape_err, ModelError, Result};
use crate::generator::{Generator, GeneratorInput, GeneratorOutput};
use crate::mixture::{soft_label_tensor, weak_emotion_loss, MixtureHead};
use crate::nn::{log_sigmoid, scalar, to_tensor, values};
use crate::optim::{batches, Adam};
use crate::params::{derive_seed, ParamBuilder, ParamStore};
use crate::sampler::KeyframeSampler;

pub const GENERATOR_PREFIX: &str = "gen.";
pub const DISCRIMINATOR_PREFIX: &str = "disc.";

/// Mean L1 over the head and tail frames only. `pred` is `(B, N, F)`.
pub fn reconstruction_loss(pred: &Tensor, head_gt: &Tensor, tail_gt: &Tensor, layout: &SegmentLayout) -> Result<Tensor> {
    let (_, n, _) = pred.dims3()?;
    if n != layout.total() {
        return shape_err(format!("prediction has {n} frames, layout has {}", layout.total()));
    }
    let head = pred.narrow(1, 0, layout.head_frames)?;
    let tail = pred.narrow(1, layout.tail().start, layout.tail_frames)?;
    if head.dims() != head_gt.dims() || tail.dims() != tail_gt.dims() {
        return shape_err(format!(
            "ground truth {:?}/{:?} vs predicted segments {:?}/{:?}",
            head_gt.dims(),
            tail_gt.dims(),
            head.dims(),
            tail.dims()
        ));
    }
    let diff = Tensor::cat(&[(head - head_gt)?.abs()?, (tail - tail_gt)?.abs()?], 1)?;
    Ok(diff.mean_all()?)
}

/// Binary cross-entropy of logits `z` against a constant target `y`,
/// averaged: `−mean[y ln σ(z) + (1 − y) ln σ(−z)]`.
pub fn bce_with_logits(z: &Tensor, target: f64) -> Result<Tensor> {
    let pos = (log_sigmoid(z)? * target)?;
    let neg = (log_sigmoid(&z.neg()?)? * (1.0 - target))?;
    Ok((pos + neg)?.mean_all()?.neg()?)
}

#[derive(Debug, Clone)]
pub struct AdversarialLosses {
    /// `BCE(D(real), real_label) + BCE(D(fake), 0)`, fake detached.
    pub discriminator: Tensor,
    /// Non-saturating `−mean ln D(fake)`.
    pub generator: Tensor,
}

/// Losses from discriminator logits. `fake_logits_detached` must come from
/// detached generator output.
pub fn adversarial_losses_from_logits(
    real_logits: &Tensor,
    fake_logits_detached: &Tensor,
    fake_logits: &Tensor,
    real_label: f64,
) -> Result<AdversarialLosses> {
    let discriminator = (bce_with_logits(real_logits, real_label)? + bce_with_logits(fake_logits_detached, 0.0)?)?;
    let generator = log_sigmoid(fake_logits)?.mean_all()?.neg()?;
    Ok(AdversarialLosses {
        discriminator,
        generator,
    })
}

/// Scores ground-truth segments as real and generated sequences as fake.
pub fn adversarial_losses(
    disc: &Discriminator,
    real: &[&Tensor],
    fake: &Tensor,
    real_label: f64,
) -> Result<AdversarialLosses> {
    let real_logits = real
        .iter()
        .map(|r| disc.logits(r))
        .collect::<Result<Vec<_>>>()?;
    let real_logits = Tensor::cat(&real_logits, 0)?;
    let fake_detached = disc.logits(&fake.detach())?;
    let fake_live = disc.logits(fake)?;
    adversarial_losses_from_logits(&real_logits, &fake_detached, &fake_live, real_label)
}

/// `λr·L_rec + λadv·L_adv + L_emotion`; refuses non-finite parts.
pub fn total_loss(rec: &Tensor, adv: &Tensor, emotion: &Tensor, lambda_r: f64, lambda_adv: f64) -> Result<Tensor> {
    for (part, t) in [("reconstruction", rec), ("adversarial", adv), ("emotion", emotion)] {
        if !scalar(t)?.is_finite() {
            return Err(ModelError::NonFinite { part, epoch: 0, step: 0 });
        }
    }
    Ok(((rec * lambda_r)? + (adv * lambda_adv)? + emotion)?)
}

/// One sample converted to tensors-ready form.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub sample_id: String,
    /// `(T, mel_bins)`.
    pub mel: Tensor,
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
    pub seed: Vec<f64>,
    pub head_emotion: usize,
    pub tail_emotion: usize,
}

impl PreparedSample {
    pub fn new(sample: &EmotionTransitionSample, cfg: &RunConfig) -> Result<Self> {
        let l = &cfg.layout;
        let f = cfg.skeleton.joint_count() * 3;
        let check = |what: &str, frames: usize, want: usize, width: usize| {
            if frames != want || width != f {
                return Err(ModelError::Data(format!(
                    "sample {}: {what} has {frames} frames of width {width}, expected {want} of {f}",
                    sample.sample_id
                )));
            }
            Ok(())
        };
        check("head", sample.head_pose_gt.frames(), l.head_frames, sample.head_pose_gt.frame_len())?;
        check("tail", sample.tail_pose_gt.frames(), l.tail_frames, sample.tail_pose_gt.frame_len())?;
        check("seed", sample.seed_poses.frames(), cfg.model.seed_frames, sample.seed_poses.frame_len())?;
        Ok(Self {
            sample_id: sample.sample_id.clone(),
            mel: mel_tensor(&sample.audio, cfg)?,
            head: sample.head_pose_gt.as_slice().to_vec(),
            tail: sample.tail_pose_gt.as_slice().to_vec(),
            seed: sample.seed_poses.as_slice().to_vec(),
            head_emotion: sample.head_emotion.id,
            tail_emotion: sample.tail_emotion.id,
        })
    }
}

pub fn prepare_samples(samples: &[EmotionTransitionSample], cfg: &RunConfig) -> Result<Vec<PreparedSample>> {
    samples.iter().map(|s| PreparedSample::new(s, cfg)).collect()
}

/// Stacked tensors for a set of prepared samples.
#[derive(Debug, Clone)]
pub struct Batch {
    pub mel: Tensor,
    pub head: Tensor,
    pub tail: Tensor,
    pub seed: Tensor,
    pub reference: Tensor,
    pub pairs: Vec<(usize, usize)>,
}

impl Batch {
    /// Reference tracks are drawn from `sampler` with `rng`.
    pub fn new(
        cfg: &RunConfig,
        samples: &[&PreparedSample],
        sampler: &KeyframeSampler,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let heads: Vec<&[f64]> = samples.iter().map(|s| s.head.as_slice()).collect();
        let tails: Vec<&[f64]> = samples.iter().map(|s| s.tail.as_slice()).collect();
        let tracks = sampler.sample_reference_tracks(&cfg.layout, &heads, &tails, rng)?;
        Self::with_references(cfg, samples, tracks)
    }

    pub fn with_references(cfg: &RunConfig, samples: &[&PreparedSample], tracks: Vec<Vec<f64>>) -> Result<Self> {
        let b = samples.len();
        if b == 0 || tracks.len() != b {
            return shape_err("batch needs one reference track per sample");
        }
        let f = cfg.skeleton.joint_count() * 3;
        let l = &cfg.layout;
        let mels: Vec<&Tensor> = samples.iter().map(|s| &s.mel).collect();
        let cat = |get: &dyn Fn(&PreparedSample) -> &[f64], frames: usize| {
            let data: Vec<f64> = samples.iter().flat_map(|s| get(s).iter().copied()).collect();
            to_tensor(data, &[b, frames, f])
        };
        Ok(Self {
            mel: Tensor::stack(&mels, 0)?,
            head: cat(&|s| &s.head, l.head_frames)?,
            tail: cat(&|s| &s.tail, l.tail_frames)?,
            seed: cat(&|s| &s.seed, cfg.model.seed_frames)?,
            reference: to_tensor(tracks.concat(), &[b, l.total(), f])?,
            pairs: samples.iter().map(|s| (s.head_emotion, s.tail_emotion)).collect(),
        })
    }

    pub fn input(&self) -> GeneratorInput {
        GeneratorInput {
            mel: self.mel.clone(),
            reference: self.reference.clone(),
            seed: self.seed.clone(),
        }
    }
}

/// Generator, mixture head and discriminator sharing one store.
#[derive(Debug, Clone)]
pub struct GanModules {
    pub generator: Generator,
    pub mixture: MixtureHead,
    pub discriminator: Discriminator,
}

impl GanModules {
    pub fn new(cfg: &RunConfig, store: &ParamStore) -> Result<Self> {
        Self::from_builder(cfg, &store.builder())
    }

    pub fn from_builder(cfg: &RunConfig, pb: &ParamBuilder) -> Result<Self> {
        let g = pb.pp("gen");
        let l = &cfg.layout;
        Ok(Self {
            generator: Generator::new(cfg, &g)?,
            mixture: MixtureHead::new(cfg.model.feature_dim, l.head_frames, l.tail_frames, &g.pp("mix"))?,
            discriminator: Discriminator::new(cfg, &pb.pp("disc"))?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorLosses {
    pub rec: Tensor,
    pub adv: Tensor,
    pub emotion: Tensor,
    pub sigma: Tensor,
    pub total: Tensor,
}

/// Generator-side objective for one batch.
pub fn generator_objective(
    cfg: &RunConfig,
    modules: &GanModules,
    classifier: &EmotionClassifier,
    batch: &Batch,
) -> Result<(GeneratorLosses, GeneratorOutput)> {
    let out = modules.generator.forward(&batch.input())?;
    let layout = &cfg.layout;
    let rec = reconstruction_loss(&out.poses, &batch.head, &batch.tail, layout)?;
    let adv = log_sigmoid(&modules.discriminator.logits(&out.poses)?)?
        .mean_all()?
        .neg()?;
    let mix = modules.mixture.forward(&out.head_feats, &out.tail_feats)?;
    let label = soft_label_tensor(&mix.sigma, &batch.pairs, cfg.emotions.len())?;
    let transition = out.poses.narrow(1, layout.head_frames, layout.transition_frames)?;
    let emotion = weak_emotion_loss(&classifier.forward(&transition)?, &label)?;
    let total = total_loss(&rec, &adv, &emotion, cfg.train.lambda_r, cfg.train.lambda_adv)?;
    Ok((
        GeneratorLosses {
            rec,
            adv,
            emotion,
            sigma: mix.sigma,
            total,
        },
        out,
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_rec: f64,
    pub l_adv: f64,
    pub l_disc: f64,
    pub l_emotion: f64,
    pub total: f64,
    pub sigma_mean: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Overrides `train.epochs`.
    pub epochs: Option<usize>,
    /// History and periodic checkpoints go here when set.
    pub out_dir: Option<PathBuf>,
}

pub const HISTORY_FILE: &str = "history.jsonl";
pub const CHECKPOINTS_DIR: &str = "checkpoints";
pub const LAST_GOOD_DIR: &str = "last_good";

/// Writes weights and metadata for the GAN store into `dir`.
pub fn save_generator_checkpoint(
    dir: &Path,
    cfg: &RunConfig,
    store: &ParamStore,
    epochs_completed: usize,
    report: serde_json::Value,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", dir.display())))?;
    store.save(&dir.join(WEIGHTS_FILE))?;
    let mut meta = CheckpointMeta::new(CheckpointKind::Generator, cfg, epochs_completed > 0);
    meta.epochs_completed = epochs_completed;
    meta.report = report;
    meta.save(dir)?;
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> ModelError {
    ModelError::Checkpoint(format!("{}: {e}", path.display()))
}

/// Alternating 1:1 discriminator/generator updates over `samples`.
///
/// The classifier must be built from a frozen builder; the sampler must be
/// trained. Returns the per-epoch history.
pub fn train(
    cfg: &RunConfig,
    store: &ParamStore,
    modules: &GanModules,
    samples: &[PreparedSample],
    classifier: &EmotionClassifier,
    sampler: &KeyframeSampler,
    opts: &TrainOptions,
) -> Result<Vec<EpochRecord>> {
    if !sampler.is_trained() {
        return Err(ModelError::Untrained("keyframe sampler"));
    }
    if samples.is_empty() {
        return Err(ModelError::Data("no training samples".into()));
    }
    let tc = &cfg.train;
    let epochs = opts.epochs.unwrap_or(tc.epochs);
    let clip = (tc.grad_clip > 0.0).then_some(tc.grad_clip);
    let mut opt_d = Adam::new(store.vars_with_prefix(DISCRIMINATOR_PREFIX), tc.discriminator_learning_rate, clip)?;
    let mut opt_g = Adam::new(store.vars_with_prefix(GENERATOR_PREFIX), tc.learning_rate, clip)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "train"));

    let mut history_file = match &opts.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let path = dir.join(HISTORY_FILE);
            Some(
                std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| io_err(&path, e))?,
            )
        }
        None => None,
    };

    let mut history = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let snapshot: HashMap<String, Tensor> = store.snapshot();
        let mut sums = EpochRecord {
            epoch,
            ..Default::default()
        };
        let mut steps = 0usize;
        for idx in batches(samples.len(), tc.batch_size, &mut rng) {
            let members: Vec<&PreparedSample> = idx.iter().map(|&i| &samples[i]).collect();
            let batch = Batch::new(cfg, &members, sampler, &mut rng)?;
            let step_result = train_step(cfg, modules, classifier, &batch, &mut opt_d, &mut opt_g);
            let (rec, adv, disc, emo, total, sigma, norm) = match step_result {
                Ok(v) => v,
                Err(ModelError::NonFinite { part, .. }) => {
                    store.restore(&snapshot)?;
                    if let Some(dir) = &opts.out_dir {
                        save_generator_checkpoint(
                            &dir.join(LAST_GOOD_DIR),
                            cfg,
                            store,
                            epoch - 1,
                            serde_json::json!({ "halted": format!("non-finite {part} loss") }),
                        )?;
                    }
                    return Err(ModelError::NonFinite { part, epoch, step: steps });
                }
                Err(e) => return Err(e),
            };
            sums.l_rec += rec;
            sums.l_adv += adv;
            sums.l_disc += disc;
            sums.l_emotion += emo;
            sums.total += total;
            sums.sigma_mean += sigma;
            sums.grad_norm += norm;
            steps += 1;
        }
        let k = steps as f64;
        let rec = EpochRecord {
            epoch,
            l_rec: sums.l_rec / k,
            l_adv: sums.l_adv / k,
            l_disc: sums.l_disc / k,
            l_emotion: sums.l_emotion / k,
            total: sums.total / k,
            sigma_mean: sums.sigma_mean / k,
            grad_norm: sums.grad_norm / k,
        };
        log::info!(
            "epoch {epoch}: rec {:.4} adv {:.4} disc {:.4} emotion {:.4} sigma {:.3}",
            rec.l_rec,
            rec.l_adv,
            rec.l_disc,
            rec.l_emotion,
            rec.sigma_mean
        );
        if let (Some(file), Some(dir)) = (history_file.as_mut(), &opts.out_dir) {
            let line = serde_json::to_string(&rec).expect("record serializes");
            writeln!(file, "{line}").map_err(|e| io_err(dir, e))?;
        }
        history.push(rec);
        if let Some(dir) = &opts.out_dir {
            if tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0 {
                save_generator_checkpoint(
                    &dir.join(CHECKPOINTS_DIR).join(format!("epoch_{epoch:04}")),
                    cfg,
                    store,
                    epoch,
                    serde_json::to_value(&history).expect("history serializes"),
                )?;
            }
        }
    }
    Ok(history)
}

type StepStats = (f64, f64, f64, f64, f64, f64, f64);

fn finite(part: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::NonFinite { part, epoch: 0, step: 0 })
    }
}

fn train_step(
    cfg: &RunConfig,
    modules: &GanModules,
    classifier: &EmotionClassifier,
    batch: &Batch,
    opt_d: &mut Adam,
    opt_g: &mut Adam,
) -> Result<StepStats> {
    // Discriminator step on detached generator output.
    let fake = modules.generator.forward(&batch.input())?.poses.detach();
    let disc = &modules.discriminator;
    let real_logits = Tensor::cat(&[disc.logits(&batch.head)?, disc.logits(&batch.tail)?], 0)?;
    let d_loss = (bce_with_logits(&real_logits, cfg.train.real_label)? + bce_with_logits(&disc.logits(&fake)?, 0.0)?)?;
    let d_val = finite("discriminator", scalar(&d_loss)?)?;
    opt_d.backward_step(&d_loss)?;

    // Generator step against the updated discriminator.
    let (losses, _) = generator_objective(cfg, modules, classifier, batch)?;
    let total = finite("total", scalar(&losses.total)?)?;
    let norm = opt_g.backward_step(&losses.total)?;
    let sigma = values(&losses.sigma)?;
    Ok((
        scalar(&losses.rec)?,
        scalar(&losses.adv)?,
        d_val,
        scalar(&losses.emotion)?,
        total,
        sigma.iter().sum::<f64>() / sigma.len() as f64,
        norm,
    ))
}

/// Generated pose sequences, one per `(sample, seed)` pair, each flattened
/// `N × J·3`. A sample's output depends only on the weights, the sample and
/// its seed.
pub fn generate(
    cfg: &RunConfig,
    generator: &Generator,
    sampler: &KeyframeSampler,
    samples: &[&PreparedSample],
    seeds: &[u64],
) -> Result<Vec<Vec<f64>>> {
    if samples.len() != seeds.len() {
        return shape_err("one seed per sample is required");
    }
    let mut out = Vec::with_capacity(samples.len());
    for (s, &seed) in samples.iter().zip(seeds) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = Batch::new(cfg, &[*s], sampler, &mut rng)?;
        let poses = generator.forward(&batch.input())?.poses.detach();
        out.push(values(&poses)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstruction_closed_forms_and_mask() {
        let layout = SegmentLayout::new(3, 2, 3).unwrap();
        let gt_h = to_tensor((0..9).map(|x| x as f64).collect(), &[1, 3, 3]).unwrap();
        let gt_t = to_tensor((0..9).map(|x| -(x as f64)).collect(), &[1, 3, 3]).unwrap();
        let trans = to_tensor(vec![7.0; 6], &[1, 2, 3]).unwrap();
        let pred = Tensor::cat(&[&gt_h, &trans, &gt_t], 1).unwrap();
        let l = scalar(&reconstruction_loss(&pred, &gt_h, &gt_t, &layout).unwrap()).unwrap();
        assert_eq!(l, 0.0);
        let shifted = (&pred + 1.0).unwrap();
        let l = scalar(&reconstruction_loss(&shifted, &gt_h, &gt_t, &layout).unwrap()).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
        let other = Tensor::cat(&[&gt_h, &(trans * -3.0).unwrap(), &gt_t], 1).unwrap();
        assert_eq!(scalar(&reconstruction_loss(&other, &gt_h, &gt_t, &layout).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn adversarial_closed_forms() {
        let zero = to_tensor(vec![0.0; 4], &[4]).unwrap();
        let l = adversarial_losses_from_logits(&zero, &zero, &zero, 1.0).unwrap();
        assert!((scalar(&l.discriminator).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
        let big = to_tensor(vec![40.0; 2], &[2]).unwrap();
        let small = to_tensor(vec![-40.0; 2], &[2]).unwrap();
        let l = adversarial_losses_from_logits(&big, &small, &small, 1.0).unwrap();
        assert!(scalar(&l.discriminator).unwrap() < 1e-15);
        let mut prev = f64::INFINITY;
        for p in [0.1, 0.3, 0.5, 0.7, 0.9f64] {
            let z = to_tensor(vec![(p / (1.0 - p)).ln()], &[1]).unwrap();
            let g = scalar(&adversarial_losses_from_logits(&z, &z, &z, 1.0).unwrap().generator).unwrap();
            assert!((g + p.ln()).abs() < 1e-12);
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn total_loss_weights_and_refuses_nan() {
        let one = to_tensor(vec![1.0], &[]).unwrap();
        assert_eq!(scalar(&total_loss(&one, &one, &one, 20.0, 2.0).unwrap()).unwrap(), 23.0);
        let zero = to_tensor(vec![0.0], &[]).unwrap();
        assert_eq!(scalar(&total_loss(&zero, &zero, &zero, 20.0, 2.0).unwrap()).unwrap(), 0.0);
        let nan = to_tensor(vec![f64::NAN], &[]).unwrap();
        match total_loss(&one, &one, &nan, 20.0, 2.0) {
            Err(ModelError::NonFinite { part, .. }) => assert_eq!(part, "emotion"),
            other => panic!("{other:?}"),
        }
    }
}
