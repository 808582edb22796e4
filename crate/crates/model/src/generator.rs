//! Audio-conditioned transformer generator with motion transition infusion.

use candle_core::{Module, Tensor, D};
use candle_nn::Linear;
use emogest_core::{RunConfig, SegmentLayout};

use crate::audio_encoder::AudioEncoder;
use crate::error::{shape_err, Result};
use crate::nn::{linear, linear_with_bias, positional_encoding, softplus, AttentionBlock, Mlp};
use crate::params::{Init, ParamBuilder};

/// Raw gain bias whose softplus is 1, so a fresh style starts near identity.
const UNIT_SOFTPLUS: f64 = 0.541_324_854_612_918_1;
const GAIN_EPS: f64 = 1e-4;
/// AdaIN clamps per-channel std at this value.
pub const ADAIN_MIN_STD: f64 = 1e-8;

/// Row-wise `softmax(chunk · transᵀ / √D)` over batched `(B, L, D)` inputs.
pub fn correlation(chunk: &Tensor, trans: &Tensor) -> Result<Tensor> {
    let (b1, l1, d1) = chunk.dims3()?;
    let (b2, l2, d2) = trans.dims3()?;
    if (b1, l1, d1) != (b2, l2, d2) {
        return shape_err(format!(
            "correlation inputs {:?} and {:?} differ",
            chunk.dims(),
            trans.dims()
        ));
    }
    let logits = (chunk.matmul(&trans.t()?)? / (d1 as f64).sqrt())?;
    Ok(candle_nn::ops::softmax(&logits, D::Minus1)?)
}

/// `γ ⊙ (content − μ)/σ + β` with statistics per channel over the frame axis.
///
/// `content` is `(B, L, D)`, `gamma` and `beta` are `(B, D)`. Channels whose
/// std falls below [`ADAIN_MIN_STD`] are normalized with the clamped value.
pub fn adain(content: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let mu = content.mean_keepdim(1)?;
    let centered = content.broadcast_sub(&mu)?;
    let var = centered.sqr()?.mean_keepdim(1)?;
    if log::log_enabled!(log::Level::Debug) {
        let degenerate = var
            .flatten_all()?
            .to_vec1::<f64>()?
            .iter()
            .filter(|v| v.sqrt() < ADAIN_MIN_STD)
            .count();
        if degenerate > 0 {
            log::debug!("adain: {degenerate} channel(s) with std below {ADAIN_MIN_STD}");
        }
    }
    let sigma = var.maximum(ADAIN_MIN_STD * ADAIN_MIN_STD)?.sqrt()?;
    let normed = centered.broadcast_div(&sigma)?;
    Ok(normed
        .broadcast_mul(&gamma.unsqueeze(1)?)?
        .broadcast_add(&beta.unsqueeze(1)?)?)
}

/// Style encoder and AdaIN over the transition embedding.
#[derive(Debug, Clone)]
pub struct MotionInfusion {
    pub(crate) enc: Mlp,
    pub(crate) gamma: Linear,
    pub(crate) beta: Linear,
    transition_frames: usize,
    positive_gain: bool,
}

/// Intermediate values of one infusion pass.
#[derive(Debug, Clone)]
pub struct InfusionTrace {
    pub head_corr: Tensor,
    pub tail_corr: Tensor,
    pub composed: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub output: Tensor,
}

impl MotionInfusion {
    pub fn new(
        transition_frames: usize,
        dim: usize,
        hidden: usize,
        positive_gain: bool,
        pb: &ParamBuilder,
    ) -> Result<Self> {
        let l2 = transition_frames * transition_frames;
        let gain_bias = if positive_gain { UNIT_SOFTPLUS } else { 1.0 };
        Ok(Self {
            enc: Mlp::new(&[l2, hidden, hidden], &pb.pp("enc"))?,
            gamma: linear_with_bias(hidden, dim, Init::Const(gain_bias), &pb.pp("gamma"))?,
            beta: linear_with_bias(hidden, dim, Init::Zeros, &pb.pp("beta"))?,
            transition_frames,
            positive_gain,
        })
    }

    /// Style `(γ, β)`, each `(B, D)`, from the composed correlation `(B, L, L)`.
    pub fn style(&self, composed: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, l, _) = composed.dims3()?;
        let h = self.enc.forward(&composed.reshape((b, l * l))?)?.gelu()?;
        let raw_gamma = self.gamma.forward(&h)?;
        let gamma = if self.positive_gain {
            (softplus(&raw_gamma)? + GAIN_EPS)?
        } else {
            raw_gamma
        };
        Ok((gamma, self.beta.forward(&h)?))
    }

    /// `f_head (B, H, D)`, `f_tran (B, L, D)`, `f_tail (B, T, D)`.
    pub fn forward_trace(&self, f_head: &Tensor, f_tran: &Tensor, f_tail: &Tensor) -> Result<InfusionTrace> {
        let l = self.transition_frames;
        let heads = f_head.dim(1)?;
        if f_tran.dim(1)? != l || heads < l || f_tail.dim(1)? < l {
            return shape_err(format!(
                "infusion expects L = {l}: head {:?}, transition {:?}, tail {:?}",
                f_head.dims(),
                f_tran.dims(),
                f_tail.dims()
            ));
        }
        let head_chunk = f_head.narrow(1, heads - l, l)?;
        let tail_chunk = f_tail.narrow(1, 0, l)?;
        let head_corr = correlation(&head_chunk, f_tran)?;
        let tail_corr = correlation(&tail_chunk, f_tran)?;
        let composed = head_corr.matmul(&tail_corr)?;
        let (gamma, beta) = self.style(&composed)?;
        let output = adain(f_tran, &gamma, &beta)?;
        Ok(InfusionTrace {
            head_corr,
            tail_corr,
            composed,
            gamma,
            beta,
            output,
        })
    }

    pub fn forward(&self, f_head: &Tensor, f_tran: &Tensor, f_tail: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(f_head, f_tran, f_tail)?.output)
    }
}

/// Per-frame linear projection from features to joint coordinates.
#[derive(Debug, Clone)]
pub struct PoseDecoder {
    pub(crate) proj: Linear,
}

impl PoseDecoder {
    pub fn new(dim: usize, frame_len: usize, pb: &ParamBuilder) -> Result<Self> {
        Ok(Self {
            proj: linear(dim, frame_len, pb)?,
        })
    }

    pub fn from_linear(proj: Linear) -> Self {
        Self { proj }
    }

    /// `(B, N, D)` to `(B, N, J·3)`.
    pub fn forward(&self, features: &Tensor) -> Result<Tensor> {
        Ok(self.proj.forward(features)?)
    }
}

/// Batched generator input.
#[derive(Debug, Clone)]
pub struct GeneratorInput {
    /// `(B, T, mel_bins)`.
    pub mel: Tensor,
    /// Sampled reference track `(B, N, J·3)`.
    pub reference: Tensor,
    /// Seed poses `(B, M, J·3)`.
    pub seed: Tensor,
}

#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    /// `(B, N, J·3)`.
    pub poses: Tensor,
    /// Decoder features after infusion, `(B, N, D)`.
    pub features: Tensor,
    pub head_feats: Tensor,
    pub tail_feats: Tensor,
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub(crate) audio: AudioEncoder,
    pub(crate) encoder: Vec<AttentionBlock>,
    pub(crate) ref_proj: Linear,
    pub(crate) decoder: Vec<AttentionBlock>,
    pub(crate) infusion: MotionInfusion,
    pub(crate) seed_proj: Linear,
    pub(crate) pose: PoseDecoder,
    layout: SegmentLayout,
    dim: usize,
    frame_len: usize,
    seed_frames: usize,
}

impl Generator {
    pub fn new(cfg: &RunConfig, pb: &ParamBuilder) -> Result<Self> {
        let m = &cfg.model;
        let d = m.feature_dim;
        let frame_len = cfg.skeleton.joint_count() * 3;
        let block = |name: String| AttentionBlock::new(d, m.heads, m.ffn_dim, &pb.pp(name));
        Ok(Self {
            audio: AudioEncoder::new(cfg.audio.mel_bins, m.audio_channels, d, &pb.pp("audio"))?,
            encoder: (0..m.encoder_blocks)
                .map(|i| block(format!("enc{i}")))
                .collect::<Result<_>>()?,
            ref_proj: linear(frame_len, d, &pb.pp("ref"))?,
            decoder: (0..m.decoder_blocks)
                .map(|i| block(format!("dec{i}")))
                .collect::<Result<_>>()?,
            infusion: MotionInfusion::new(
                cfg.layout.transition_frames,
                d,
                m.style_hidden,
                m.positive_gain,
                &pb.pp("mtim"),
            )?,
            seed_proj: linear(m.seed_frames * frame_len, d, &pb.pp("seed"))?,
            pose: PoseDecoder::new(d, frame_len, &pb.pp("pose"))?,
            layout: cfg.layout,
            dim: d,
            frame_len,
            seed_frames: m.seed_frames,
        })
    }

    pub fn layout(&self) -> SegmentLayout {
        self.layout
    }

    /// Audio features with positional encoding, through the encoder stack.
    pub fn encode_audio(&self, mel: &Tensor) -> Result<Tensor> {
        let n = self.layout.total();
        let pe = self.positions(n)?;
        let mut a = self.audio.forward(mel, n)?.broadcast_add(&pe)?;
        for block in &self.encoder {
            a = block.forward(&a, None)?;
        }
        Ok(a)
    }

    fn positions(&self, n: usize) -> Result<Tensor> {
        let pos: Vec<f64> = (0..n).map(|t| t as f64).collect();
        positional_encoding(&pos, self.dim)
    }

    /// Reference queries attend to audio features through the decoder stack.
    pub fn cross_attend(&self, query: &Tensor, audio: &Tensor) -> Result<Tensor> {
        if query.dims() != audio.dims() {
            return shape_err(format!(
                "query {:?} and audio features {:?} differ",
                query.dims(),
                audio.dims()
            ));
        }
        let mut q = query.clone();
        for block in &self.decoder {
            q = block.forward(&q, Some(audio))?;
        }
        Ok(q)
    }

    pub fn forward(&self, input: &GeneratorInput) -> Result<GeneratorOutput> {
        let n = self.layout.total();
        let (b, rn, rf) = input.reference.dims3()?;
        if rn != n || rf != self.frame_len {
            return shape_err(format!(
                "reference track {:?}, expected (B, {n}, {})",
                input.reference.dims(),
                self.frame_len
            ));
        }
        let (sb, sm, sf) = input.seed.dims3()?;
        if sb != b || sm != self.seed_frames || sf != self.frame_len {
            return shape_err(format!(
                "seed poses {:?}, expected ({b}, {}, {})",
                input.seed.dims(),
                self.seed_frames,
                self.frame_len
            ));
        }
        if input.mel.dim(0)? != b {
            return shape_err("mel and reference batch sizes differ");
        }

        let audio = self.encode_audio(&input.mel)?;
        let query = self
            .ref_proj
            .forward(&input.reference)?
            .broadcast_add(&self.positions(n)?)?;
        let feats = self.cross_attend(&query, &audio)?;

        let (h, l, t) = (
            self.layout.head_frames,
            self.layout.transition_frames,
            self.layout.tail_frames,
        );
        let head = feats.narrow(1, 0, h)?;
        let tran = feats.narrow(1, h, l)?;
        let tail = feats.narrow(1, h + l, t)?;
        let infused = self.infusion.forward(&head, &tran, &tail)?;
        let features = Tensor::cat(&[&head, &infused, &tail], 1)?;

        let seed_emb = self
            .seed_proj
            .forward(&input.seed.reshape((b, sm * sf))?)?
            .unsqueeze(1)?;
        let anchor = input.seed.mean_keepdim(1)?;
        let poses = self
            .pose
            .forward(&features.broadcast_add(&seed_emb)?)?
            .broadcast_add(&anchor)?;
        Ok(GeneratorOutput {
            poses,
            features,
            head_feats: head,
            tail_feats: tail,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{to_tensor, values};
    use crate::params::ParamStore;
    use rand::{Rng, SeedableRng};

    fn rand_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
        let n = shape.iter().product();
        to_tensor((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape).unwrap()
    }

    fn tiny_config() -> RunConfig {
        let mut cfg = RunConfig::toy();
        cfg.layout = SegmentLayout::new(6, 3, 6).unwrap();
        cfg.model.feature_dim = 8;
        cfg.model.ffn_dim = 16;
        cfg.model.audio_channels = 2;
        cfg.model.style_hidden = 8;
        cfg.model.encoder_blocks = 1;
        cfg.model.decoder_blocks = 1;
        cfg.model.seed_frames = 2;
        cfg.audio.mel_bins = 8;
        cfg
    }

    #[test]
    fn constant_inputs_give_uniform_correlation() {
        let c = to_tensor([0.3, -1.0, 2.0].repeat(4), &[1, 4, 3]).unwrap();
        let t = to_tensor([1.0, 0.5, -0.2].repeat(4), &[1, 4, 3]).unwrap();
        for v in values(&correlation(&c, &t).unwrap()).unwrap() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_basis_gives_near_identity_correlation() {
        let mut basis = vec![0.0; 16];
        for i in 0..4 {
            basis[i * 4 + i] = 20.0;
        }
        let b = to_tensor(basis, &[1, 4, 4]).unwrap();
        let c = correlation(&b, &b).unwrap().squeeze(0).unwrap().to_vec2::<f64>().unwrap();
        for (i, row) in c.iter().enumerate() {
            assert!(row[i] > 0.99);
        }
        assert!(correlation(&b, &b.narrow(1, 0, 3).unwrap()).is_err());
    }

    #[test]
    fn adain_matches_definition() {
        let content = to_tensor(vec![1.0, -1.0, 0.0, 3.0], &[1, 2, 2]).unwrap();
        // Channel 0 is already standardized; channel 1 has mean 1.5, std 1.5.
        let gamma = to_tensor(vec![2.0, 1.0], &[1, 2]).unwrap();
        let beta = to_tensor(vec![5.0, 0.0], &[1, 2]).unwrap();
        let out = values(&adain(&content, &gamma, &beta).unwrap()).unwrap();
        let want = [7.0, -1.0, 3.0, 1.0];
        for (a, b) in out.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{out:?}");
        }
    }

    #[test]
    fn adain_constant_channel_does_not_blow_up() {
        let content = to_tensor(vec![2.0, 1.0, 2.0, 3.0], &[1, 2, 2]).unwrap();
        let gamma = to_tensor(vec![1.0, 1.0], &[1, 2]).unwrap();
        let beta = to_tensor(vec![0.5, 0.0], &[1, 2]).unwrap();
        let out = values(&adain(&content, &gamma, &beta).unwrap()).unwrap();
        assert!(out.iter().all(|x| x.is_finite()));
        assert_eq!(out[0], 0.5);
    }

    #[test]
    fn infusion_leaves_head_and_tail_untouched() {
        let cfg = tiny_config();
        let store = ParamStore::new(1);
        let g = Generator::new(&cfg, &store.builder().pp("gen")).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let input = GeneratorInput {
            mel: rand_tensor(&[2, 10, 8], &mut rng),
            reference: rand_tensor(&[2, 15, 24], &mut rng),
            seed: rand_tensor(&[2, 2, 24], &mut rng),
        };
        let audio = g.encode_audio(&input.mel).unwrap();
        let q = g
            .ref_proj
            .forward(&input.reference)
            .unwrap()
            .broadcast_add(&g.positions(15).unwrap())
            .unwrap();
        let raw = g.cross_attend(&q, &audio).unwrap();
        let out = g.forward(&input).unwrap();
        assert_eq!(out.poses.dims(), &[2, 15, 24]);
        let raw_v = raw.to_vec3::<f64>().unwrap();
        let new_v = out.features.to_vec3::<f64>().unwrap();
        for b in 0..2 {
            for t in (0..6).chain(9..15) {
                assert_eq!(raw_v[b][t], new_v[b][t]);
            }
            assert_ne!(raw_v[b][7], new_v[b][7]);
        }
        let again = g.forward(&input).unwrap();
        assert_eq!(values(&out.poses).unwrap(), values(&again.poses).unwrap());
    }

    #[test]
    fn zero_decoder_gives_zero_poses() {
        let w = Tensor::zeros((6, 4), crate::params::DTYPE, &ParamStore::device()).unwrap();
        let b = Tensor::zeros(6, crate::params::DTYPE, &ParamStore::device()).unwrap();
        let dec = PoseDecoder::from_linear(Linear::new(w, Some(b)));
        let f = to_tensor((0..12).map(|x| x as f64).collect(), &[1, 3, 4]).unwrap();
        assert!(values(&dec.forward(&f).unwrap()).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_decoder_copies_features() {
        let mut eye = vec![0.0; 6 * 8];
        for i in 0..6 {
            eye[i * 8 + i] = 1.0;
        }
        let w = to_tensor(eye, &[6, 8]).unwrap();
        let b = Tensor::zeros(6, crate::params::DTYPE, &ParamStore::device()).unwrap();
        let dec = PoseDecoder::from_linear(Linear::new(w, Some(b)));
        let f: Vec<f64> = (0..8).map(|x| x as f64 * 0.5).collect();
        let out = values(&dec.forward(&to_tensor(f.clone(), &[1, 1, 8]).unwrap()).unwrap()).unwrap();
        assert_eq!(out, f[..6].to_vec());
    }
}
