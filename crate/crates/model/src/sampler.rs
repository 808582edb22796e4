//! Keyframe-conditioned CVAE over `L`-frame pose chunks, and the blended
//! reference track it produces for the generator's queries.

use candle_core::{Tensor, D};
use emogest_core::{EmotionTransitionSample, RunConfig, SegmentLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, ModelError, Result};
use crate::nn::{scalar, to_tensor, Mlp};
use crate::optim::{batches, Adam};
use crate::params::{derive_seed, ParamBuilder, ParamStore};

pub const LOG_VAR_LIMIT: f64 = 10.0;

/// Diagonal Gaussian `(B, Z)`.
#[derive(Debug, Clone)]
pub struct LatentGaussian {
    pub mean: Tensor,
    pub log_var: Tensor,
}

impl LatentGaussian {
    fn from_stats(stats: &Tensor, latent: usize) -> Result<Self> {
        Ok(Self {
            mean: stats.narrow(D::Minus1, 0, latent)?,
            log_var: stats
                .narrow(D::Minus1, latent, latent)?
                .clamp(-LOG_VAR_LIMIT, LOG_VAR_LIMIT)?,
        })
    }

    /// `μ + exp(½ log σ²) ⊙ ε`.
    pub fn reparameterize(&self, eps: &Tensor) -> Result<Tensor> {
        Ok((&self.mean + (&self.log_var * 0.5)?.exp()?.mul(eps)?)?)
    }
}

/// Closed-form `KL(q ‖ p)` for diagonal Gaussians, summed over the latent
/// axis: `(B,)`.
pub fn kl_divergence(q: &LatentGaussian, p: &LatentGaussian) -> Result<Tensor> {
    let var_q = q.log_var.exp()?;
    let var_p = p.log_var.exp()?;
    let diff = (&q.mean - &p.mean)?.sqr()?;
    let ratio = ((var_q + diff)? / var_p)?;
    let terms = (((&p.log_var - &q.log_var)? + ratio)? - 1.0)?;
    Ok((terms.sum(D::Minus1)? * 0.5)?)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SamplerReport {
    pub epochs: usize,
    pub chunks: usize,
    pub initial_l1: f64,
    pub final_l1: f64,
    pub final_kl: f64,
    pub history: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct KeyframeSampler {
    chunk_enc: Mlp,
    key_enc: Mlp,
    dec: Mlp,
    chunk_len: usize,
    frame_len: usize,
    latent: usize,
    crossfade: usize,
    trained: bool,
}

impl KeyframeSampler {
    pub fn new(cfg: &RunConfig, pb: &ParamBuilder) -> Result<Self> {
        let l = cfg.layout.transition_frames;
        let f = cfg.skeleton.joint_count() * 3;
        let h = cfg.sampler.hidden;
        let z = cfg.sampler.latent_dim;
        Ok(Self {
            chunk_enc: Mlp::new(&[l * f, h, h, 2 * z], &pb.pp("chunk_enc"))?,
            key_enc: Mlp::new(&[f, h, h, 2 * z], &pb.pp("key_enc"))?,
            dec: Mlp::new(&[z + f, h, h, l * f], &pb.pp("dec"))?,
            chunk_len: l,
            frame_len: f,
            latent: z,
            crossfade: cfg.sampler.crossfade,
            trained: false,
        })
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn set_trained(&mut self, trained: bool) {
        self.trained = trained;
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    /// Posterior from chunks `(B, L, J·3)`.
    pub fn encode_chunk(&self, chunk: &Tensor) -> Result<LatentGaussian> {
        let (b, l, f) = chunk.dims3()?;
        if l != self.chunk_len || f != self.frame_len {
            return shape_err(format!(
                "chunk {:?}, expected (B, {}, {})",
                chunk.dims(),
                self.chunk_len,
                self.frame_len
            ));
        }
        let stats = self.chunk_enc.forward(&chunk.reshape((b, l * f))?)?;
        LatentGaussian::from_stats(&stats, self.latent)
    }

    /// Conditional prior from keyframes `(B, J·3)`.
    pub fn encode_keyframe(&self, frame: &Tensor) -> Result<LatentGaussian> {
        let (_, f) = frame.dims2()?;
        if f != self.frame_len {
            return shape_err(format!("keyframe width {f}, expected {}", self.frame_len));
        }
        LatentGaussian::from_stats(&self.key_enc.forward(frame)?, self.latent)
    }

    /// `z (B, Z)`, keyframe `(B, J·3)` to a chunk `(B, L, J·3)` expressed
    /// relative to the keyframe.
    pub fn decode_chunk(&self, z: &Tensor, keyframe: &Tensor) -> Result<Tensor> {
        let (b, zd) = z.dims2()?;
        if zd != self.latent || keyframe.dims() != [b, self.frame_len] {
            return shape_err(format!(
                "decoder inputs {:?} and {:?}",
                z.dims(),
                keyframe.dims()
            ));
        }
        let out = self.dec.forward(&Tensor::cat(&[z, keyframe], 1)?)?;
        let out = out.reshape((b, self.chunk_len, self.frame_len))?;
        Ok(out.broadcast_add(&keyframe.unsqueeze(1)?)?)
    }

    /// `(L1, KL)` batch means for one CVAE step.
    pub fn loss_terms(&self, chunks: &Tensor, keys: &Tensor, eps: &Tensor) -> Result<(Tensor, Tensor)> {
        let post = self.encode_chunk(chunks)?;
        let prior = self.encode_keyframe(keys)?;
        let z = post.reparameterize(eps)?;
        let recon = self.decode_chunk(&z, keys)?;
        let l1 = (recon - chunks)?.abs()?.mean_all()?;
        let kl = kl_divergence(&post, &prior)?.mean_all()?;
        Ok((l1, kl))
    }

    /// Samples one chunk per keyframe from the conditional prior.
    pub fn sample_chunks(&self, keys: &Tensor, rng: &mut impl Rng) -> Result<Tensor> {
        let b = keys.dim(0)?;
        let prior = self.encode_keyframe(keys)?;
        let eps = normal_tensor(&[b, self.latent], rng)?;
        self.decode_chunk(&prior.reparameterize(&eps)?, keys)
    }

    /// Blended reference tracks for several samples at once.
    ///
    /// `heads[i]` and `tails[i]` are flattened ground-truth segments of
    /// sample `i`. Each returned track has `layout.total()` frames.
    pub fn sample_reference_tracks(
        &self,
        layout: &SegmentLayout,
        heads: &[&[f64]],
        tails: &[&[f64]],
        rng: &mut impl Rng,
    ) -> Result<Vec<Vec<f64>>> {
        if !self.trained {
            return Err(ModelError::Untrained("keyframe sampler"));
        }
        let f = self.frame_len;
        let l = self.chunk_len;
        let (h, t) = (layout.head_frames, layout.tail_frames);
        if heads.len() != tails.len() {
            return shape_err("head and tail batch sizes differ");
        }
        for (hd, tl) in heads.iter().zip(tails) {
            if hd.len() != h * f || tl.len() != t * f {
                return shape_err("ground-truth segment lengths do not match the layout");
            }
        }
        let n = layout.total();
        let positions = n.div_ceil(l);
        let mut keys = Vec::with_capacity(heads.len() * positions * f);
        for (hd, tl) in heads.iter().zip(tails) {
            for k in 0..positions {
                let (start, end) = (k * l, ((k + 1) * l).min(n));
                let frame = if end <= h {
                    let i = rng.gen_range(start..end);
                    &hd[i * f..(i + 1) * f]
                } else if start >= h + layout.transition_frames {
                    let i = rng.gen_range(start..end) - (n - t);
                    &tl[i * f..(i + 1) * f]
                } else {
                    let i = rng.gen_range(0..h + t);
                    if i < h {
                        &hd[i * f..(i + 1) * f]
                    } else {
                        &tl[(i - h) * f..(i - h + 1) * f]
                    }
                };
                keys.extend_from_slice(frame);
            }
        }
        let keys = to_tensor(keys, &[heads.len() * positions, f])?;
        let chunks = self.sample_chunks(&keys.detach(), rng)?.detach();
        let chunks = chunks.reshape((heads.len(), positions, l * f))?.to_vec3::<f64>()?;
        Ok(chunks
            .iter()
            .map(|c| blend_chunks(c, l, f, n, self.crossfade))
            .collect())
    }

    /// Single-sample convenience over [`Self::sample_reference_tracks`].
    pub fn sample_reference_track(
        &self,
        layout: &SegmentLayout,
        sample: &EmotionTransitionSample,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tracks = self.sample_reference_tracks(
            layout,
            &[sample.head_pose_gt.as_slice()],
            &[sample.tail_pose_gt.as_slice()],
            &mut rng,
        )?;
        Ok(tracks.remove(0))
    }
}

/// Lays chunks end to end over `n` frames and crossfades each boundary.
///
/// Around boundary `b` the window `[b − B/2, b + B/2]` mixes the left chunk
/// (held at its last frame) and the right chunk (held at its first frame)
/// with weight `w = (t − (b − B/2)) / B` on the right.
pub fn blend_chunks(chunks: &[Vec<f64>], l: usize, f: usize, n: usize, crossfade: usize) -> Vec<f64> {
    let frame = |k: usize, i: usize| &chunks[k][i * f..(i + 1) * f];
    let mut out = Vec::with_capacity(n * f);
    for t in 0..n {
        out.extend_from_slice(frame(t / l, t % l));
    }
    if crossfade == 0 {
        return out;
    }
    let half = crossfade as f64 / 2.0;
    for k in 1..chunks.len() {
        let b = k * l;
        if b >= n {
            break;
        }
        let lo = (b as f64 - half).ceil().max(0.0) as usize;
        let hi = ((b as f64 + half).floor() as usize).min(n - 1);
        for t in lo..=hi {
            let w = (t as f64 - (b as f64 - half)) / crossfade as f64;
            let left = frame(k - 1, t.saturating_sub((k - 1) * l).min(l - 1));
            let right = frame(k, t.saturating_sub(b));
            for c in 0..f {
                out[t * f + c] = (1.0 - w) * left[c] + w * right[c];
            }
        }
    }
    out
}

pub fn normal_tensor(shape: &[usize], rng: &mut impl Rng) -> Result<Tensor> {
    let n = shape.iter().product();
    to_tensor((0..n).map(|_| rng.sample(StandardNormal)).collect(), shape)
}

/// Non-overlapping `L`-frame chunks tiled inside every head and tail segment.
pub fn training_chunks(samples: &[EmotionTransitionSample], l: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for s in samples {
        for seg in [&s.head_pose_gt, &s.tail_pose_gt] {
            let f = seg.frame_len();
            let mut start = 0;
            while start + l <= seg.frames() {
                out.push(seg.as_slice()[start * f..(start + l) * f].to_vec());
                start += l;
            }
        }
    }
    out
}

/// Trains the CVAE on chunks with L1 reconstruction plus `β·KL`.
pub fn pretrain_sampler(
    cfg: &RunConfig,
    store: &ParamStore,
    samples: &[EmotionTransitionSample],
) -> Result<(KeyframeSampler, SamplerReport)> {
    let mut sampler = KeyframeSampler::new(cfg, &store.builder().pp("sampler"))?;
    let l = cfg.layout.transition_frames;
    let f = cfg.skeleton.joint_count() * 3;
    let chunks = training_chunks(samples, l);
    if chunks.is_empty() {
        return Err(ModelError::Data("no chunks to train the sampler on".into()));
    }
    let sc = &cfg.sampler;
    let mut opt = Adam::new(store.vars_with_prefix("sampler."), sc.learning_rate, Some(cfg.train.grad_clip))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "sampler"));
    let mut report = SamplerReport {
        epochs: sc.epochs,
        chunks: chunks.len(),
        ..Default::default()
    };
    for epoch in 0..sc.epochs {
        let (mut l1_sum, mut kl_sum, mut steps) = (0.0, 0.0, 0usize);
        for idx in batches(chunks.len(), sc.batch_size, &mut rng) {
            let b = idx.len();
            let mut data = Vec::with_capacity(b * l * f);
            let mut keys = Vec::with_capacity(b * f);
            for &i in &idx {
                data.extend_from_slice(&chunks[i]);
                let k = rng.gen_range(0..l);
                keys.extend_from_slice(&chunks[i][k * f..(k + 1) * f]);
            }
            let x = to_tensor(data, &[b, l, f])?;
            let keys = to_tensor(keys, &[b, f])?;
            let eps = normal_tensor(&[b, sc.latent_dim], &mut rng)?;
            let (l1, kl) = sampler.loss_terms(&x, &keys, &eps)?;
            let loss = (&l1 + (&kl * sc.beta_kl)?)?;
            let (l1v, klv) = (scalar(&l1)?, scalar(&kl)?);
            if !(l1v.is_finite() && klv.is_finite()) {
                return Err(ModelError::NonFinite {
                    part: "sampler",
                    epoch,
                    step: steps,
                });
            }
            opt.backward_step(&loss)?;
            l1_sum += l1v;
            kl_sum += klv;
            steps += 1;
        }
        let (l1m, klm) = (l1_sum / steps as f64, kl_sum / steps as f64);
        if epoch == 0 {
            report.initial_l1 = l1m;
        }
        log::debug!("sampler epoch {epoch}: l1 {l1m:.4} kl {klm:.4}");
        report.history.push((l1m, klm));
        report.final_l1 = l1m;
        report.final_kl = klm;
    }
    sampler.set_trained(true);
    Ok((sampler, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::values;

    fn gaussian(mean: Vec<f64>, log_var: Vec<f64>) -> LatentGaussian {
        let z = mean.len();
        LatentGaussian {
            mean: to_tensor(mean, &[1, z]).unwrap(),
            log_var: to_tensor(log_var, &[1, z]).unwrap(),
        }
    }

    #[test]
    fn kl_closed_forms() {
        let a = gaussian(vec![0.3, -1.0], vec![0.5, -2.0]);
        assert!(scalar(&kl_divergence(&a, &a).unwrap()).unwrap().abs() < 1e-15);
        let kl = kl_divergence(&gaussian(vec![0.0], vec![0.0]), &gaussian(vec![1.0], vec![0.0])).unwrap();
        assert!((scalar(&kl).unwrap() - 0.5).abs() < 1e-12);
        let kl = kl_divergence(&gaussian(vec![0.0], vec![1.0]), &gaussian(vec![0.0], vec![0.0])).unwrap();
        assert!((scalar(&kl).unwrap() - 0.5 * (1f64.exp() - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn blend_midpoint_is_even_mix() {
        let chunks = vec![vec![0.0, 1.0, 2.0, 3.0], vec![10.0, 11.0, 12.0, 13.0]];
        let out = blend_chunks(&chunks, 4, 1, 8, 2);
        // Boundary at 4: frame 3 keeps the left chunk, frame 5 the right one.
        assert_eq!(out, vec![0.0, 1.0, 2.0, 3.0, 0.5 * 3.0 + 0.5 * 10.0, 11.0, 12.0, 13.0]);
        assert_eq!(blend_chunks(&chunks, 4, 1, 6, 0), vec![0.0, 1.0, 2.0, 3.0, 10.0, 11.0]);
    }

    #[test]
    fn blend_crossfade_four() {
        let chunks = vec![vec![0.0; 4], vec![4.0; 4]];
        let out = blend_chunks(&chunks, 4, 1, 8, 4);
        assert_eq!(out, vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn reparameterized_mean_concentrates() {
        let g = gaussian(vec![0.5, -2.0], vec![0.0, 2f64.ln()]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mean = g.mean.broadcast_as((n, 2)).unwrap().contiguous().unwrap();
        let lv = g.log_var.broadcast_as((n, 2)).unwrap().contiguous().unwrap();
        let big = LatentGaussian { mean, log_var: lv };
        let z = big.reparameterize(&normal_tensor(&[n, 2], &mut rng).unwrap()).unwrap();
        let m = values(&z.mean(0).unwrap()).unwrap();
        assert!((m[0] - 0.5).abs() < 3.0 / 100.0);
        assert!((m[1] + 2.0).abs() < 3.0 * 2f64.sqrt() / 100.0);
    }

    #[test]
    fn untrained_sampler_refuses() {
        let cfg = RunConfig::toy();
        let store = ParamStore::new(0);
        let s = KeyframeSampler::new(&cfg, &store.builder()).unwrap();
        let layout = cfg.layout;
        let head = vec![0.0; layout.head_frames * 24];
        let tail = vec![0.0; layout.tail_frames * 24];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            s.sample_reference_tracks(&layout, &[&head], &[&tail], &mut rng),
            Err(ModelError::Untrained(_))
        ));
    }

    #[test]
    fn reference_tracks_are_seeded_and_full_length() {
        let cfg = RunConfig::toy();
        let store = ParamStore::new(0);
        let mut s = KeyframeSampler::new(&cfg, &store.builder()).unwrap();
        s.set_trained(true);
        let layout = cfg.layout;
        let head: Vec<f64> = (0..layout.head_frames * 24).map(|i| (i as f64 * 0.01).sin()).collect();
        let tail: Vec<f64> = (0..layout.tail_frames * 24).map(|i| (i as f64 * 0.02).cos()).collect();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            s.sample_reference_tracks(&layout, &[&head], &[&tail], &mut rng).unwrap().remove(0)
        };
        let a = run(1);
        assert_eq!(a.len(), 150 * 24);
        assert_eq!(a, run(1));
        let b = run(2);
        assert!(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() > 0.0);
    }

    #[test]
    fn zero_weight_encoders_return_bias() {
        let cfg = RunConfig::toy();
        let store = ParamStore::new(0);
        let s = KeyframeSampler::new(&cfg, &store.builder()).unwrap();
        for (name, var) in store.named_vars_with_prefix("") {
            if name.ends_with("weight") {
                var.set(&var.as_tensor().zeros_like().unwrap()).unwrap();
            }
        }
        let z = cfg.sampler.latent_dim;
        let chunk = to_tensor(vec![0.7; 30 * 24], &[1, 30, 24]).unwrap();
        let post = s.encode_chunk(&chunk).unwrap();
        let bias = values(&store.var("chunk_enc.l2.bias").unwrap().as_tensor().clone()).unwrap();
        assert_eq!(values(&post.mean).unwrap(), bias[..z].to_vec());
        let lv: Vec<f64> = bias[z..].iter().map(|v| v.clamp(-10.0, 10.0)).collect();
        assert_eq!(values(&post.log_var).unwrap(), lv);
        let key = to_tensor(vec![0.1; 24], &[1, 24]).unwrap();
        let prior = s.encode_keyframe(&key).unwrap();
        let kb = values(&store.var("key_enc.l2.bias").unwrap().as_tensor().clone()).unwrap();
        assert_eq!(values(&prior.mean).unwrap(), kb[..z].to_vec());
        assert!(s.encode_chunk(&chunk.narrow(1, 0, 29).unwrap()).is_err());
    }
}
