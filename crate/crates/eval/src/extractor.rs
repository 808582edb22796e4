//! Sequence autoencoder whose bottleneck provides FGD features.

use emogest_core::{EmotionTransitionSample, RunConfig};
use emogest_model::nn::{scalar, to_tensor, values, Mlp};
use emogest_model::optim::{batches, Adam};
use emogest_model::params::derive_seed;
use emogest_model::{ParamBuilder, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const PREFIX: &str = "fgd";
/// Below this many chunks pretraining still runs but logs a warning.
pub const MIN_CHUNKS: usize = 100;

/// Maps pose chunks of a fixed length to feature vectors.
pub trait FeatureExtractor {
    fn chunk_len(&self) -> usize;
    fn frame_len(&self) -> usize;
    fn feature_dim(&self) -> usize;
    /// One feature vector per chunk; each chunk is `chunk_len × frame_len`.
    fn features(&self, chunks: &[&[f64]]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone)]
pub struct FgdExtractor {
    encoder: Mlp,
    decoder: Mlp,
    chunk_len: usize,
    frame_len: usize,
    feature_dim: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractorReport {
    pub chunks: usize,
    pub epochs: usize,
    pub initial_l1: f64,
    pub final_l1: f64,
    pub history: Vec<f64>,
}

impl FgdExtractor {
    /// Chunks are `layout.transition_frames` long.
    pub fn new(cfg: &RunConfig, pb: &ParamBuilder) -> Result<Self> {
        let chunk_len = cfg.layout.transition_frames;
        let frame_len = cfg.skeleton.joint_count() * 3;
        let e = &cfg.eval;
        let width = chunk_len * frame_len;
        Ok(Self {
            encoder: Mlp::new(&[width, e.fgd_hidden, e.fgd_feature_dim], &pb.pp("encoder"))?,
            decoder: Mlp::new(&[e.fgd_feature_dim, e.fgd_hidden, width], &pb.pp("decoder"))?,
            chunk_len,
            frame_len,
            feature_dim: e.fgd_feature_dim,
        })
    }

    fn stack(&self, chunks: &[&[f64]]) -> Result<candle_core::Tensor> {
        let width = self.chunk_len * self.frame_len;
        if let Some(bad) = chunks.iter().find(|c| c.len() != width) {
            return invalid(format!("chunk of {} values, extractor expects {width}", bad.len()));
        }
        Ok(to_tensor(chunks.concat(), &[chunks.len(), width])?)
    }

    /// Mean absolute reconstruction error over the chunks.
    pub fn reconstruction_l1(&self, chunks: &[&[f64]]) -> Result<f64> {
        let x = self.stack(chunks)?;
        let y = self.decoder.forward(&self.encoder.forward(&x)?)?;
        Ok(scalar(&(y - &x)?.abs()?.mean_all()?)?)
    }
}

impl FeatureExtractor for FgdExtractor {
    fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    fn frame_len(&self) -> usize {
        self.frame_len
    }

    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn features(&self, chunks: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        if chunks.is_empty() {
            return Ok(Vec::new());
        }
        let z = values(&self.encoder.forward(&self.stack(chunks)?)?)?;
        Ok(z.chunks(self.feature_dim).map(<[f64]>::to_vec).collect())
    }
}

/// Ground-truth head and tail windows of length `l` with stride `l / 2`.
pub fn extractor_chunks(samples: &[EmotionTransitionSample], l: usize) -> Vec<Vec<f64>> {
    let stride = (l / 2).max(1);
    let mut out = Vec::new();
    for s in samples {
        for seg in [&s.head_pose_gt, &s.tail_pose_gt] {
            let f = seg.frame_len();
            let mut start = 0;
            while start + l <= seg.frames() {
                out.push(seg.as_slice()[start * f..(start + l) * f].to_vec());
                start += stride;
            }
        }
    }
    out
}

/// Trains the autoencoder with an L1 reconstruction loss.
pub fn pretrain_fgd_extractor(
    cfg: &RunConfig,
    store: &ParamStore,
    chunks: &[Vec<f64>],
) -> Result<(FgdExtractor, ExtractorReport)> {
    let ext = FgdExtractor::new(cfg, &store.builder().pp(PREFIX))?;
    if chunks.is_empty() {
        return invalid("no chunks to train the FGD extractor on");
    }
    if chunks.len() < MIN_CHUNKS {
        log::warn!("FGD extractor trained on only {} chunks", chunks.len());
    }
    let e = &cfg.eval;
    let mut opt = Adam::new(store.vars_with_prefix(&format!("{PREFIX}.")), e.fgd_learning_rate, Some(cfg.train.grad_clip))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "fgd"));
    let mut report = ExtractorReport {
        chunks: chunks.len(),
        epochs: e.fgd_epochs,
        ..Default::default()
    };
    for epoch in 0..e.fgd_epochs {
        let (mut sum, mut steps) = (0.0, 0usize);
        for idx in batches(chunks.len(), e.fgd_batch_size, &mut rng) {
            let members: Vec<&[f64]> = idx.iter().map(|&i| chunks[i].as_slice()).collect();
            let x = ext.stack(&members)?;
            let loss = (ext.decoder.forward(&ext.encoder.forward(&x)?)? - &x)?.abs()?.mean_all()?;
            sum += scalar(&loss)?;
            opt.backward_step(&loss)?;
            steps += 1;
        }
        let mean = sum / steps as f64;
        if !mean.is_finite() {
            return invalid(format!("non-finite extractor loss at epoch {epoch}"));
        }
        if epoch == 0 {
            report.initial_l1 = mean;
        }
        log::debug!("fgd extractor epoch {epoch}: l1 {mean:.5}");
        report.history.push(mean);
        report.final_l1 = mean;
    }
    let frozen = FgdExtractor::new(cfg, &store.frozen_builder().pp(PREFIX))?;
    Ok((frozen, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::toy();
        cfg.eval.fgd_epochs = 300;
        cfg
    }

    #[test]
    fn feature_shape_and_frozen_determinism() {
        let cfg = tiny_cfg();
        let store = ParamStore::new(3);
        let ext = FgdExtractor::new(&cfg, &store.frozen_builder().pp(PREFIX)).unwrap();
        let width = ext.chunk_len() * ext.frame_len();
        let chunks: Vec<Vec<f64>> = (0..5).map(|i| (0..width).map(|k| ((i * k) as f64).sin()).collect()).collect();
        let refs: Vec<&[f64]> = chunks.iter().map(Vec::as_slice).collect();
        let a = ext.features(&refs).unwrap();
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|f| f.len() == cfg.eval.fgd_feature_dim));
        assert_eq!(a, ext.features(&refs).unwrap());
        assert!(ext.features(&[&chunks[0][1..]]).is_err());
    }

    #[test]
    fn overfits_a_single_chunk() {
        let cfg = tiny_cfg();
        let store = ParamStore::new(5);
        let width = cfg.layout.transition_frames * cfg.skeleton.joint_count() * 3;
        let chunk: Vec<f64> = (0..width).map(|k| 0.3 * (k as f64 * 0.37).sin()).collect();
        let before = FgdExtractor::new(&cfg, &store.frozen_builder().pp(PREFIX))
            .unwrap()
            .reconstruction_l1(&[&chunk])
            .unwrap();
        let (ext, report) = pretrain_fgd_extractor(&cfg, &store, &[chunk.clone()]).unwrap();
        let after = ext.reconstruction_l1(&[&chunk]).unwrap();
        assert!(after < 0.1 * before, "{before} -> {after}");
        assert_eq!(report.history.len(), 300);
    }
}
