//! Layers shared by the generator, classifier and sampler.
//!
//! LayerNorm is composed from primitive ops because candle's fused kernel
//! has no backward pass.

use candle_core::{Module, Tensor, D};
use candle_nn::Linear;

use crate::error::{shape_err, Result};
use crate::params::{Init, ParamBuilder, ParamStore, DTYPE};

pub fn linear(in_dim: usize, out_dim: usize, pb: &ParamBuilder) -> Result<Linear> {
    let bound = 1.0 / (in_dim as f64).sqrt();
    let w = pb.get("weight", &[out_dim, in_dim], Init::Uniform(bound))?;
    let b = pb.get("bias", &[out_dim], Init::Uniform(bound))?;
    Ok(Linear::new(w, Some(b)))
}

/// Linear layer with explicit bias initialization.
pub fn linear_with_bias(
    in_dim: usize,
    out_dim: usize,
    bias: Init,
    pb: &ParamBuilder,
) -> Result<Linear> {
    let bound = 1.0 / (in_dim as f64).sqrt();
    let w = pb.get("weight", &[out_dim, in_dim], Init::Uniform(bound))?;
    let b = pb.get("bias", &[out_dim], bias)?;
    Ok(Linear::new(w, Some(b)))
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(dim: usize, pb: &ParamBuilder) -> Result<Self> {
        Ok(Self {
            weight: pb.get("weight", &[dim], Init::Const(1.0))?,
            bias: pb.get("bias", &[dim], Init::Zeros)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed
            .broadcast_mul(&self.weight)?
            .broadcast_add(&self.bias)?)
    }
}

/// Stack of linear layers with GELU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// `dims = [in, hidden..., out]`.
    pub fn new(dims: &[usize], pb: &ParamBuilder) -> Result<Self> {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| linear(w[0], w[1], &pb.pp(format!("l{i}"))))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(&h)?;
            if i + 1 < self.layers.len() {
                h = h.gelu()?;
            }
        }
        Ok(h)
    }

    pub fn last(&self) -> &Linear {
        self.layers.last().expect("non-empty mlp")
    }
}

/// `softmax(q kᵀ / √d) v` over the last two axes, `d` = key width.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(Tensor, Tensor)> {
    let d = k.dim(D::Minus1)? as f64;
    let scores = (q.matmul(&k.t()?)? / d.sqrt())?;
    let weights = candle_nn::ops::softmax(&scores, D::Minus1)?;
    Ok((weights.matmul(v)?, weights))
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub(crate) q: Linear,
    pub(crate) k: Linear,
    pub(crate) v: Linear,
    pub(crate) out: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(dim: usize, heads: usize, pb: &ParamBuilder) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return shape_err(format!("dim {dim} not divisible by {heads} heads"));
        }
        Ok(Self {
            q: linear(dim, dim, &pb.pp("q"))?,
            k: linear(dim, dim, &pb.pp("k"))?,
            v: linear(dim, dim, &pb.pp("v"))?,
            out: linear(dim, dim, &pb.pp("out"))?,
            heads,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    fn split(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        Ok(x.reshape((b, t, self.heads, d / self.heads))?
            .transpose(1, 2)?
            .contiguous()?)
    }

    /// Queries from `query` `(B, Tq, D)`, keys and values from `memory`
    /// `(B, Tk, D)`. Returns the output and per-head weights `(B, H, Tq, Tk)`.
    pub fn forward_with_weights(&self, query: &Tensor, memory: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, tq, d) = query.dims3()?;
        let (bm, _, dm) = memory.dims3()?;
        if b != bm || d != dm {
            return shape_err(format!(
                "attention query {:?} vs memory {:?}",
                query.dims(),
                memory.dims()
            ));
        }
        let q = self.split(&self.q.forward(query)?)?;
        let k = self.split(&self.k.forward(memory)?)?;
        let v = self.split(&self.v.forward(memory)?)?;
        let (ctx, weights) = attention(&q, &k, &v)?;
        let ctx = ctx.transpose(1, 2)?.contiguous()?.reshape((b, tq, d))?;
        Ok((self.out.forward(&ctx)?, weights))
    }

    pub fn forward(&self, query: &Tensor, memory: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_weights(query, memory)?.0)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub(crate) up: Linear,
    pub(crate) down: Linear,
}

impl FeedForward {
    pub fn new(dim: usize, hidden: usize, pb: &ParamBuilder) -> Result<Self> {
        Ok(Self {
            up: linear(dim, hidden, &pb.pp("up"))?,
            down: linear(hidden, dim, &pb.pp("down"))?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.down.forward(&self.up.forward(x)?.gelu()?)?)
    }
}

/// Pre-norm transformer block. With `memory = None` it is a self-attention
/// encoder block; otherwise queries attend to `memory`.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub(crate) attn: MultiHeadAttention,
    pub(crate) norm1: LayerNorm,
    pub(crate) ffn: FeedForward,
    pub(crate) norm2: LayerNorm,
}

impl AttentionBlock {
    pub fn new(dim: usize, heads: usize, ffn_dim: usize, pb: &ParamBuilder) -> Result<Self> {
        Ok(Self {
            attn: MultiHeadAttention::new(dim, heads, &pb.pp("attn"))?,
            norm1: LayerNorm::new(dim, &pb.pp("norm1"))?,
            ffn: FeedForward::new(dim, ffn_dim, &pb.pp("ffn"))?,
            norm2: LayerNorm::new(dim, &pb.pp("norm2"))?,
        })
    }

    pub fn forward(&self, x: &Tensor, memory: Option<&Tensor>) -> Result<Tensor> {
        let h = self.norm1.forward(x)?;
        let a = self.attn.forward(&h, memory.unwrap_or(&h))?;
        let x = (x + a)?;
        let f = self.ffn.forward(&self.norm2.forward(&x)?)?;
        Ok((x + f)?)
    }
}

/// Sinusoidal encoding evaluated at (possibly fractional) positions.
pub fn positional_encoding(positions: &[f64], dim: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(positions.len() * dim);
    for &p in positions {
        for i in 0..dim {
            let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            data.push(if i % 2 == 0 { (p * freq).sin() } else { (p * freq).cos() });
        }
    }
    Ok(Tensor::from_vec(data, (positions.len(), dim), &ParamStore::device())?)
}

/// Positions `0..len` stretched onto a reference length, so a model trained
/// on `reference`-frame windows sees the same positional range for any
/// window length.
pub fn stretched_positions(len: usize, reference: usize) -> Vec<f64> {
    if len <= 1 {
        return vec![0.0; len];
    }
    let scale = (reference.max(1) - 1) as f64 / (len - 1) as f64;
    (0..len).map(|t| t as f64 * scale).collect()
}

/// Numerically stable `ln(1 + eˣ)`.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((x.relu()? + tail)?)
}

/// `ln σ(x) = -softplus(-x)`.
pub fn log_sigmoid(x: &Tensor) -> Result<Tensor> {
    softplus(&x.neg()?)?.neg().map_err(Into::into)
}

pub fn to_tensor(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
    Ok(Tensor::from_vec(data, shape, &ParamStore::device())?)
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DTYPE)?.flatten_all()?.to_vec1::<f64>()?[0])
}

pub fn values(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.flatten_all()?.to_vec1::<f64>()?)
}
