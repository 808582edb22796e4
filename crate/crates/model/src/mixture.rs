//! Emotion mixture weight and the weak-supervision loss.

use candle_core::{Module, Tensor, D};
use candle_nn::Linear;

use crate::error::{shape_err, ModelError, Result};
use crate::nn::{linear, to_tensor};
use crate::params::ParamBuilder;

/// σ is kept this far from 0 and 1.
pub const SIGMA_EPS: f64 = 1e-12;
/// Log-probabilities are clamped at `ln(LOG_CLAMP)`.
pub const LOG_CLAMP: f64 = 1e-12;

/// Row-wise `softmax(f_head · f_tailᵀ / √D)`, `(B, H, T)`.
pub fn deformation(f_head: &Tensor, f_tail: &Tensor) -> Result<Tensor> {
    let (b1, _, d1) = f_head.dims3()?;
    let (b2, _, d2) = f_tail.dims3()?;
    if b1 != b2 || d1 != d2 {
        return shape_err(format!(
            "deformation inputs {:?} and {:?} are incompatible",
            f_head.dims(),
            f_tail.dims()
        ));
    }
    let logits = (f_head.matmul(&f_tail.t()?)? / (d1 as f64).sqrt())?;
    Ok(candle_nn::ops::softmax(&logits, D::Minus1)?)
}

/// Learned maps that turn head and tail embeddings into the two logits
/// whose softmax is `(σ, 1 − σ)`.
#[derive(Debug, Clone)]
pub struct MixtureHead {
    pub(crate) w_head: Linear,
    pub(crate) w_tail: Linear,
    head_frames: usize,
    tail_frames: usize,
}

#[derive(Debug, Clone)]
pub struct MixtureTrace {
    pub deformation: Tensor,
    pub e_head: Tensor,
    pub e_tail: Tensor,
    /// `(B,)`, strictly inside `(0, 1)`.
    pub sigma: Tensor,
}

impl MixtureHead {
    pub fn new(dim: usize, head_frames: usize, tail_frames: usize, pb: &ParamBuilder) -> Result<Self> {
        Ok(Self {
            w_head: linear(dim, tail_frames, &pb.pp("w_head"))?,
            w_tail: linear(dim, head_frames, &pb.pp("w_tail"))?,
            head_frames,
            tail_frames,
        })
    }

    pub fn from_linears(w_head: Linear, w_tail: Linear, head_frames: usize, tail_frames: usize) -> Self {
        Self {
            w_head,
            w_tail,
            head_frames,
            tail_frames,
        }
    }

    pub fn forward(&self, f_head: &Tensor, f_tail: &Tensor) -> Result<MixtureTrace> {
        if f_head.dim(1)? != self.head_frames || f_tail.dim(1)? != self.tail_frames {
            return shape_err(format!(
                "mixture expects {} head and {} tail frames, got {:?} and {:?}",
                self.head_frames,
                self.tail_frames,
                f_head.dims(),
                f_tail.dims()
            ));
        }
        let s = deformation(f_head, f_tail)?;
        let ph = self.w_head.forward(f_head)?;
        let pt = self.w_tail.forward(f_tail)?;
        let e_head = (ph * &s)?.max(D::Minus1)?.max(D::Minus1)?;
        let e_tail = (pt * s.transpose(1, 2)?)?.max(D::Minus1)?.max(D::Minus1)?;
        let sigma = two_way_softmax(&e_head, &e_tail)?;
        Ok(MixtureTrace {
            deformation: s,
            e_head,
            e_tail,
            sigma,
        })
    }
}

/// First component of `softmax(a, b)`, clamped into the open unit interval.
pub fn two_way_softmax(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let s = candle_nn::ops::sigmoid(&(a - b)?)?;
    Ok(s.clamp(SIGMA_EPS, 1.0 - SIGMA_EPS)?)
}

/// `σ·onehot(head) + (1 − σ)·onehot(tail)` for a single sample.
pub fn soft_label(sigma: f64, head: usize, tail: usize, classes: usize) -> Result<Vec<f64>> {
    check_pair(head, tail, classes)?;
    let mut probs = vec![0.0; classes];
    probs[head] = sigma;
    probs[tail] = 1.0 - sigma;
    Ok(probs)
}

fn check_pair(head: usize, tail: usize, classes: usize) -> Result<()> {
    if head == tail {
        return Err(ModelError::Data(format!(
            "soft label needs distinct emotions, got {head} twice"
        )));
    }
    if head >= classes || tail >= classes {
        return Err(ModelError::Data(format!(
            "emotion ids ({head}, {tail}) out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Batched soft labels `(B, E)` that stay differentiable in `sigma (B,)`.
pub fn soft_label_tensor(sigma: &Tensor, pairs: &[(usize, usize)], classes: usize) -> Result<Tensor> {
    let b = pairs.len();
    if sigma.dims() != [b] {
        return shape_err(format!("sigma {:?} for {b} label pairs", sigma.dims()));
    }
    let mut head = vec![0.0; b * classes];
    let mut tail = vec![0.0; b * classes];
    for (i, &(h, t)) in pairs.iter().enumerate() {
        check_pair(h, t, classes)?;
        head[i * classes + h] = 1.0;
        tail[i * classes + t] = 1.0;
    }
    let head = to_tensor(head, &[b, classes])?;
    let tail = to_tensor(tail, &[b, classes])?;
    let s = sigma.unsqueeze(1)?;
    let comp = (s.ones_like()? - &s)?;
    Ok((head.broadcast_mul(&s)? + tail.broadcast_mul(&comp)?)?)
}

/// Checks that each row of `softmax(logits)` is a finite distribution.
pub fn check_distribution(logits: &Tensor) -> Result<()> {
    let probs = candle_nn::ops::softmax(&logits.detach(), D::Minus1)?;
    for (i, row) in probs.to_vec2::<f64>()?.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if !row.iter().all(|p| p.is_finite() && *p >= 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(ModelError::NotADistribution(format!(
                "row {i} sums to {sum}"
            )));
        }
    }
    Ok(())
}

/// Batch-mean soft-label cross-entropy `−Σ y · log softmax(logits)`.
pub fn weak_emotion_loss(logits: &Tensor, label: &Tensor) -> Result<Tensor> {
    if logits.dims() != label.dims() {
        return shape_err(format!(
            "logits {:?} vs soft label {:?}",
            logits.dims(),
            label.dims()
        ));
    }
    check_distribution(logits)?;
    let logp = candle_nn::ops::log_softmax(logits, D::Minus1)?.maximum(LOG_CLAMP.ln())?;
    let per_sample = (label * logp)?.sum(D::Minus1)?.neg()?;
    Ok(per_sample.mean_all()?)
}
