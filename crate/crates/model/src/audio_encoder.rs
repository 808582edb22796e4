//! Convolutional audio encoder: log-mel spectrogram to an `N × D` feature
//! sequence aligned with the pose frames.

use candle_core::{Module, Tensor, D};
use candle_nn::Linear;
use emogest_core::mel::compute_mel;
use emogest_core::{AudioClip, RunConfig};

use crate::error::{shape_err, Result};
use crate::nn::{linear, to_tensor};
use crate::params::{Init, ParamBuilder};

const MIN_MEL_FRAMES: usize = 4;

/// Fits `clip` to the layout duration and returns its log-mel spectrogram as
/// a `(frames, mel_bins)` tensor.
pub fn mel_tensor(clip: &AudioClip, cfg: &RunConfig) -> Result<Tensor> {
    let clip = if clip.sample_rate == cfg.audio.sample_rate {
        clip.clone()
    } else {
        clip.resample(cfg.audio.sample_rate)?
    };
    let secs = cfg.layout.duration_secs(cfg.skeleton.fps);
    let (fitted, _) = clip.fit_to_duration(secs);
    let mel = compute_mel(&fitted, cfg.mel_params())?;
    to_tensor(mel.data, &[mel.frames, mel.mel_bins])
}

#[derive(Debug, Clone)]
struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
}

impl Conv2d {
    fn new(c_in: usize, c_out: usize, stride: usize, pb: &ParamBuilder) -> Result<Self> {
        let bound = 1.0 / ((c_in * 9) as f64).sqrt();
        Ok(Self {
            weight: pb.get("weight", &[c_out, c_in, 3, 3], Init::Uniform(bound))?,
            bias: pb.get("bias", &[c_out], Init::Uniform(bound))?,
            stride,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        // Strided conv gradients come back one short on even extents, so
        // pad those to odd first.
        let mut x = x.clone();
        if self.stride > 1 {
            for axis in [2, 3] {
                if x.dim(axis)? % 2 == 0 {
                    x = x.pad_with_zeros(axis, 0, 1)?;
                }
            }
        }
        let y = x.conv2d(&self.weight, 1, self.stride, 1, 1)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, (), 1, 1))?)?)
    }
}

/// Residual block with squeeze-excitation channel gating.
#[derive(Debug, Clone)]
struct SeBlock {
    conv1: Conv2d,
    conv2: Conv2d,
    squeeze: Linear,
    excite: Linear,
}

impl SeBlock {
    fn new(channels: usize, pb: &ParamBuilder) -> Result<Self> {
        let reduced = (channels / 4).max(1);
        Ok(Self {
            conv1: Conv2d::new(channels, channels, 1, &pb.pp("conv1"))?,
            conv2: Conv2d::new(channels, channels, 1, &pb.pp("conv2"))?,
            squeeze: linear(channels, reduced, &pb.pp("squeeze"))?,
            excite: linear(reduced, channels, &pb.pp("excite"))?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.conv2.forward(&self.conv1.forward(x)?.gelu()?)?;
        let pooled = h.mean(D::Minus1)?.mean(D::Minus1)?;
        let gate = candle_nn::ops::sigmoid(
            &self.excite.forward(&self.squeeze.forward(&pooled)?.gelu()?)?,
        )?;
        let h = h.broadcast_mul(&gate.unsqueeze(2)?.unsqueeze(3)?)?;
        let y = (h + x)?.gelu()?;
        if y.dim(3)? >= 2 {
            Ok(y.avg_pool2d_with_stride((1, 2), (1, 2))?)
        } else {
            Ok(y)
        }
    }
}

#[derive(Debug, Clone)]
pub struct AudioEncoder {
    stem: Conv2d,
    blocks: Vec<SeBlock>,
    proj: Linear,
    mel_bins: usize,
}

/// Frequency width after the stride-2 stem and one halving per block.
fn reduced_width(mel_bins: usize, blocks: usize) -> usize {
    // Even widths are padded to odd before the stride-2 stem.
    let mut w = mel_bins / 2 + 1;
    for _ in 0..blocks {
        if w >= 2 {
            w /= 2;
        }
    }
    w
}

impl AudioEncoder {
    pub const BLOCKS: usize = 3;

    pub fn new(mel_bins: usize, channels: usize, dim: usize, pb: &ParamBuilder) -> Result<Self> {
        let blocks = (0..Self::BLOCKS)
            .map(|i| SeBlock::new(channels, &pb.pp(format!("block{i}"))))
            .collect::<Result<_>>()?;
        let flat = channels * reduced_width(mel_bins, Self::BLOCKS);
        Ok(Self {
            stem: Conv2d::new(1, channels, 2, &pb.pp("stem"))?,
            blocks,
            proj: linear(flat, dim, &pb.pp("proj"))?,
            mel_bins,
        })
    }

    /// `mel` is `(B, T, mel_bins)`; returns `(B, target_frames, D)`.
    pub fn forward(&self, mel: &Tensor, target_frames: usize) -> Result<Tensor> {
        let (b, t, f) = mel.dims3()?;
        if f != self.mel_bins {
            return shape_err(format!("mel has {f} bins, encoder expects {}", self.mel_bins));
        }
        if t < MIN_MEL_FRAMES {
            return shape_err(format!("mel has {t} frames, need at least {MIN_MEL_FRAMES}"));
        }
        if target_frames == 0 {
            return shape_err("target frame count must be positive");
        }
        // Per-clip standardization; statistics are treated as constants.
        let flat = mel.reshape((b, t * f))?;
        let mean = flat.mean_keepdim(1)?;
        let std = (flat.broadcast_sub(&mean)?.sqr()?.mean_keepdim(1)?.sqrt()? + 1e-5)?;
        let x = flat
            .broadcast_sub(&mean.detach())?
            .broadcast_div(&std.detach())?
            .reshape((b, 1, t, f))?;

        let mut h = self.stem.forward(&x)?.gelu()?;
        for block in &self.blocks {
            h = block.forward(&h)?;
        }
        let (_, c, t2, f2) = h.dims4()?;
        let h = h.permute((0, 2, 1, 3))?.contiguous()?.reshape((b, t2, c * f2))?;
        let h = self.proj.forward(&h)?;
        let interp = interpolation_matrix(t2, target_frames)?;
        Ok(interp.broadcast_matmul(&h)?)
    }
}

/// `(to, from)` matrix for linear interpolation with aligned endpoints.
pub fn interpolation_matrix(from: usize, to: usize) -> Result<Tensor> {
    let mut m = vec![0.0; to * from];
    for n in 0..to {
        let pos = if to > 1 && from > 1 {
            n as f64 * (from - 1) as f64 / (to - 1) as f64
        } else {
            0.0
        };
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(from - 1);
        let w = pos - lo as f64;
        m[n * from + lo] += 1.0 - w;
        if hi != lo {
            m[n * from + hi] += w;
        }
    }
    to_tensor(m, &[to, from])
}
