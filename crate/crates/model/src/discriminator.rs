//! Motion discriminator over frame-to-frame velocities.
//!
//! Temporal convolutions followed by a mean over time, so sequences of any
//! length of at least two frames can be scored.

use candle_core::{Module, Tensor};
use candle_nn::Linear;
use emogest_core::RunConfig;

use crate::error::{shape_err, Result};
use crate::nn::linear;
use crate::params::{Init, ParamBuilder};

#[derive(Debug, Clone)]
struct Conv1d {
    weight: Tensor,
    bias: Tensor,
}

impl Conv1d {
    fn new(c_in: usize, c_out: usize, pb: &ParamBuilder) -> Result<Self> {
        let bound = 1.0 / ((c_in * 3) as f64).sqrt();
        Ok(Self {
            weight: pb.get("weight", &[c_out, c_in, 3], Init::Uniform(bound))?,
            bias: pb.get("bias", &[c_out], Init::Uniform(bound))?,
        })
    }

    /// Kernel 3, padding 1, as a matmul over stacked shifted copies. The
    /// native conv1d weight gradient is wrong for batches above one.
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c_in, t) = x.dims3()?;
        let padded = x.pad_with_zeros(2, 1, 1)?;
        let shifts = (0..3).map(|k| padded.narrow(2, k, t)).collect::<candle_core::Result<Vec<_>>>()?;
        let cols = Tensor::stack(&shifts, 2)?.reshape((b, c_in * 3, t))?;
        let c_out = self.weight.dim(0)?;
        let w = self.weight.reshape((c_out, c_in * 3))?;
        let y = w.broadcast_matmul(&cols)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, (), 1))?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    conv1: Conv1d,
    conv2: Conv1d,
    out: Linear,
    fps: f64,
    frame_len: usize,
    raw_pose: bool,
}

impl Discriminator {
    pub fn new(cfg: &RunConfig, pb: &ParamBuilder) -> Result<Self> {
        let f = cfg.skeleton.joint_count() * 3;
        let c = cfg.discriminator.channels;
        let raw_pose = cfg.discriminator.raw_pose_channel;
        let c_in = if raw_pose { 2 * f } else { f };
        Ok(Self {
            conv1: Conv1d::new(c_in, c, &pb.pp("conv1"))?,
            conv2: Conv1d::new(c, c, &pb.pp("conv2"))?,
            out: linear(c, 1, &pb.pp("out"))?,
            fps: cfg.skeleton.fps,
            frame_len: f,
            raw_pose,
        })
    }

    /// Raw logits `(B,)` for poses `(B, T, J·3)`, `T ≥ 2`.
    pub fn logits(&self, poses: &Tensor) -> Result<Tensor> {
        let (b, t, f) = poses.dims3()?;
        if t < 2 || f != self.frame_len {
            return shape_err(format!(
                "discriminator needs (B, T >= 2, {}), got {:?}",
                self.frame_len,
                poses.dims()
            ));
        }
        let vel = ((poses.narrow(1, 1, t - 1)? - poses.narrow(1, 0, t - 1)?)? * self.fps)?;
        let feats = if self.raw_pose {
            Tensor::cat(&[&vel, &poses.narrow(1, 1, t - 1)?], 2)?
        } else {
            vel
        };
        let x = feats.transpose(1, 2)?.contiguous()?;
        let h = self.conv2.forward(&self.conv1.forward(&x)?.gelu()?)?.gelu()?;
        Ok(self.out.forward(&h.mean(2)?)?.reshape(b)?)
    }

    /// `D(poses) ∈ (0, 1)`, `(B,)`.
    pub fn forward(&self, poses: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::sigmoid(&self.logits(poses)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{to_tensor, values};
    use crate::params::ParamStore;

    fn poses(t: usize, offset: f64) -> Tensor {
        to_tensor(
            (0..t * 24).map(|i| (i as f64 * 0.37).sin() + offset).collect(),
            &[1, t, 24],
        )
        .unwrap()
    }

    #[test]
    fn output_in_unit_interval_and_translation_invariant() {
        let cfg = RunConfig::toy();
        let s = ParamStore::new(0);
        let d = Discriminator::new(&cfg, &s.builder()).unwrap();
        let a = values(&d.forward(&poses(20, 0.0)).unwrap()).unwrap()[0];
        let b = values(&d.forward(&poses(20, 3.5)).unwrap()).unwrap()[0];
        assert!(a > 0.0 && a < 1.0);
        assert!((a - b).abs() <= 1e-6);
        assert!(d.forward(&poses(1, 0.0)).is_err());
    }

    #[test]
    fn constant_sequence_depends_only_on_bias_path() {
        let cfg = RunConfig::toy();
        let s = ParamStore::new(1);
        let d = Discriminator::new(&cfg, &s.builder()).unwrap();
        let still = to_tensor([0.4; 24].repeat(10), &[1, 10, 24]).unwrap();
        let other = to_tensor([-2.0; 24].repeat(10), &[1, 10, 24]).unwrap();
        let a = values(&d.forward(&still).unwrap()).unwrap()[0];
        let b = values(&d.forward(&other).unwrap()).unwrap()[0];
        assert_eq!(a, b);
    }

    #[test]
    fn column_conv_matches_native_forward() {
        let s = ParamStore::new(2);
        let conv = Conv1d::new(4, 3, &s.builder()).unwrap();
        let x = to_tensor((0..2 * 4 * 7).map(|i| (i as f64 * 0.61).cos()).collect(), &[2, 4, 7]).unwrap();
        let native = x
            .conv1d(&conv.weight, 1, 1, 1, 1)
            .unwrap()
            .broadcast_add(&conv.bias.reshape((1, (), 1)).unwrap())
            .unwrap();
        let ours = conv.forward(&x).unwrap();
        assert_eq!(ours.dims(), native.dims());
        for (a, b) in values(&ours).unwrap().iter().zip(values(&native).unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
