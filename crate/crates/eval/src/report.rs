//! Full evaluation of a generator on held-out samples.

use std::path::Path;

use emogest_core::{EmotionTransitionSample, RunConfig};
use emogest_model::classifier::EmotionClassifier;
use emogest_model::params::derive_seed;
use emogest_model::sampler::KeyframeSampler;
use emogest_model::training::{generate, prepare_samples};
use emogest_model::Generator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beat::beat_consistency;
use crate::diversity::{diversity, Diversity};
use crate::emoacc::classifier_emo_acc;
use crate::error::{invalid, EvalError, Result};
use crate::extractor::FeatureExtractor;
use crate::fgd::{fgd_ht, fgd_trans, FgdScore, HeadTail};

pub struct EvalInputs<'a> {
    pub cfg: &'a RunConfig,
    pub generator: &'a Generator,
    pub sampler: &'a KeyframeSampler,
    pub classifier: &'a EmotionClassifier,
    pub extractor: &'a dyn FeatureExtractor,
    pub samples: &'a [EmotionTransitionSample],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fgd_ht: FgdScore,
    pub fgd_trans: FgdScore,
    pub bc: f64,
    /// Sequences in which no motion beat was found (scored 0).
    pub bc_sequences_without_beats: usize,
    pub diversity: Diversity,
    /// Percentage over head and tail segments together.
    pub emo_acc: f64,
    pub emo_acc_head: f64,
    pub emo_acc_tail: f64,
    pub config_hash: String,
    pub seed: u64,
    pub samples: usize,
    pub generations_per_audio: usize,
    /// `generation_seeds[k][g]` drove generation `g` of sample `k`.
    pub generation_seeds: Vec<Vec<u64>>,
    pub notes: Vec<String>,
}

impl MetricsReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text).map_err(|e| EvalError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| EvalError::Invalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| EvalError::Invalid(format!("{}: {e}", path.display())))
    }

    fn check_finite(&self) -> Result<()> {
        let vals = [
            self.fgd_ht.value,
            self.fgd_trans.value,
            self.bc,
            self.diversity.mean,
            self.diversity.ci_low,
            self.diversity.ci_high,
            self.emo_acc,
        ];
        if vals.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            invalid(format!("non-finite metric in {vals:?}"))
        }
    }
}

/// Seeds for `generations` generations of each of `samples` samples.
pub fn generation_seeds(seed: u64, samples: usize, generations: usize) -> Vec<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "generate"));
    (0..samples).map(|_| (0..generations).map(|_| rng.gen()).collect()).collect()
}

/// Generates every sample `generations_per_audio` times and scores the first
/// generation of each with FGD, BC and EmoACC; diversity uses the extractor
/// features of all generated transitions.
pub fn evaluate(inputs: &EvalInputs, seed: u64) -> Result<MetricsReport> {
    let cfg = inputs.cfg;
    let ec = &cfg.eval;
    if inputs.samples.is_empty() {
        return invalid("no evaluation samples");
    }
    let layout = &cfg.layout;
    let f = cfg.skeleton.joint_count() * 3;
    let prepared = prepare_samples(inputs.samples, cfg)?;
    let refs: Vec<_> = prepared.iter().collect();
    let g = ec.generations_per_audio.max(1);
    let seeds = generation_seeds(seed, refs.len(), g);

    let mut generations: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(g); refs.len()];
    for round in 0..g {
        let round_seeds: Vec<u64> = seeds.iter().map(|s| s[round]).collect();
        for (k, seq) in generate(cfg, inputs.generator, inputs.sampler, &refs, &round_seeds)?
            .into_iter()
            .enumerate()
        {
            generations[k].push(seq);
        }
    }

    let first: Vec<HeadTail> = generations
        .iter()
        .map(|gens| HeadTail::split(&gens[0], layout, f))
        .collect::<Result<_>>()?;
    let gt: Vec<HeadTail> = prepared.iter().map(|p| HeadTail::ground_truth(&p.head, &p.tail)).collect();
    let draws = ec.chunk_draws;
    let ht = fgd_ht(&first, &gt, inputs.extractor, derive_seed(seed, "fgd_ht"), draws)?;
    let trans = fgd_trans(&first, inputs.extractor, derive_seed(seed, "fgd_trans"), draws)?;

    let mut bc_sum = 0.0;
    let mut without_beats = 0;
    for (gens, s) in generations.iter().zip(inputs.samples) {
        let bc = beat_consistency(&gens[0], f, cfg.skeleton.fps, &s.audio, ec.bc_sigma)?;
        bc_sum += bc.score;
        without_beats += usize::from(bc.no_motion_beats);
    }

    let heads: Vec<&[f64]> = first.iter().map(|h| h.head).collect();
    let tails: Vec<&[f64]> = first.iter().map(|h| h.tail).collect();
    let head_labels: Vec<usize> = prepared.iter().map(|p| p.head_emotion).collect();
    let tail_labels: Vec<usize> = prepared.iter().map(|p| p.tail_emotion).collect();
    let bs = cfg.classifier.batch_size;
    let acc_head = classifier_emo_acc(inputs.classifier, &heads, &head_labels, bs)?;
    let acc_tail = classifier_emo_acc(inputs.classifier, &tails, &tail_labels, bs)?;

    let transitions: Vec<&[f64]> = generations
        .iter()
        .flatten()
        .map(|seq| HeadTail::split(seq, layout, f).map(|h| h.transition))
        .collect::<Result<_>>()?;
    let feats = inputs.extractor.features(&transitions)?;
    let div = diversity(&feats, ec.diversity_pairs, ec.bootstrap_resamples, derive_seed(seed, "diversity"))?;

    let report = MetricsReport {
        fgd_ht: ht,
        fgd_trans: trans,
        bc: bc_sum / inputs.samples.len() as f64,
        bc_sequences_without_beats: without_beats,
        diversity: div,
        emo_acc: (acc_head + acc_tail) / 2.0,
        emo_acc_head: acc_head,
        emo_acc_tail: acc_tail,
        config_hash: cfg.hash(),
        seed,
        samples: inputs.samples.len(),
        generations_per_audio: g,
        generation_seeds: seeds,
        notes: vec![format!(
            "diversity over transition features of {g} generations per audio; FGD, BC and EmoACC on the first"
        )],
    };
    report.check_finite()?;
    Ok(report)
}
