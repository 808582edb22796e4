//! Adam wrapper with global gradient-norm clipping, plus batching helpers.

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;

pub struct Adam {
    inner: AdamW,
    vars: Vec<Var>,
    clip: Option<f64>,
}

impl Adam {
    pub fn new(vars: Vec<Var>, learning_rate: f64, clip: Option<f64>) -> Result<Self> {
        let params = ParamsAdamW {
            lr: learning_rate,
            weight_decay: 0.0,
            ..Default::default()
        };
        Ok(Self {
            inner: AdamW::new(vars.clone(), params)?,
            vars,
            clip,
        })
    }

    /// Backpropagates `loss`, clips and applies one update. Returns the
    /// gradient norm before clipping.
    pub fn backward_step(&mut self, loss: &Tensor) -> Result<f64> {
        let mut grads = loss.backward()?;
        let norm = self.clip_grads(&mut grads)?;
        self.inner.step(&grads)?;
        Ok(norm)
    }

    fn clip_grads(&self, grads: &mut GradStore) -> Result<f64> {
        let mut sq = 0.0;
        for v in &self.vars {
            if let Some(g) = grads.get(v.as_tensor()) {
                sq += g.sqr()?.sum_all()?.to_scalar::<f64>()?;
            }
        }
        let norm = sq.sqrt();
        if let Some(max) = self.clip {
            if norm > max && norm.is_finite() {
                let scale = max / norm;
                for v in &self.vars {
                    if let Some(g) = grads.remove(v.as_tensor()) {
                        grads.insert(v.as_tensor(), (g * scale)?);
                    }
                }
            }
        }
        Ok(norm)
    }
}

/// Shuffled index batches; the last batch may be short.
pub fn batches(n: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use rand::SeedableRng;

    #[test]
    fn clipping_bounds_update_direction_norm() {
        let v = Var::from_vec(vec![3.0, 4.0], 2, &ParamStore::device()).unwrap();
        let opt = Adam::new(vec![v.clone()], 0.1, Some(1.0)).unwrap();
        let loss = (v.as_tensor() * 10.0).unwrap().sum_all().unwrap();
        let mut grads = loss.backward().unwrap();
        let norm = opt.clip_grads(&mut grads).unwrap();
        assert!((norm - 200f64.sqrt()).abs() < 1e-12);
        let g = grads.get(v.as_tensor()).unwrap().to_vec1::<f64>().unwrap();
        assert!((g[0].hypot(g[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_descends_quadratic() {
        let v = Var::from_vec(vec![2.0], 1, &ParamStore::device()).unwrap();
        let mut opt = Adam::new(vec![v.clone()], 0.05, None).unwrap();
        for _ in 0..200 {
            let loss = v.as_tensor().sqr().unwrap().sum_all().unwrap();
            opt.backward_step(&loss).unwrap();
        }
        assert!(v.as_tensor().to_vec1::<f64>().unwrap()[0].abs() < 0.05);
    }

    #[test]
    fn batches_cover_all_indices() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let b = batches(10, 4, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
