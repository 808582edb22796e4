//! Named parameter storage with seed-derived initialization.
//!
//! Every parameter's initial values come from a ChaCha stream keyed by the
//! store seed and the parameter's full name, so initialization does not
//! depend on construction order.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{shape_err, ModelError, Result};

pub const DTYPE: DType = DType::F64;

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
    Normal(f64),
}

#[derive(Clone)]
pub struct ParamStore {
    vars: Arc<Mutex<BTreeMap<String, Var>>>,
    seed: u64,
    /// Loaded stores refuse to create parameters that were not in the file.
    strict: bool,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            vars: Arc::new(Mutex::new(BTreeMap::new())),
            seed,
            strict: false,
        }
    }

    pub fn device() -> Device {
        Device::Cpu
    }

    pub fn builder(&self) -> ParamBuilder<'_> {
        ParamBuilder {
            store: self,
            prefix: String::new(),
            frozen: false,
        }
    }

    /// Builder whose tensors are detached from the variables: no gradient
    /// ever reaches them.
    pub fn frozen_builder(&self) -> ParamBuilder<'_> {
        ParamBuilder {
            store: self,
            prefix: String::new(),
            frozen: true,
        }
    }

    pub fn len(&self) -> usize {
        self.vars.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.lock().unwrap().keys().cloned().collect()
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        self.vars.lock().unwrap().get(name).cloned()
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.lock().unwrap().values().cloned().collect()
    }

    pub fn named_vars_with_prefix(&self, prefix: &str) -> Vec<(String, Var)> {
        self.vars
            .lock()
            .unwrap()
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn vars_with_prefix(&self, prefix: &str) -> Vec<Var> {
        self.named_vars_with_prefix(prefix)
            .into_iter()
            .map(|(_, v)| v)
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.vars
            .lock()
            .unwrap()
            .values()
            .map(|v| v.elem_count())
            .sum()
    }

    fn get_or_init(&self, name: &str, shape: &[usize], init: Init) -> Result<Var> {
        let mut vars = self.vars.lock().unwrap();
        if let Some(v) = vars.get(name) {
            if v.dims() != shape {
                return shape_err(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    v.dims()
                ));
            }
            return Ok(v.clone());
        }
        if self.strict {
            return Err(ModelError::Checkpoint(format!("missing parameter {name}")));
        }
        let n: usize = shape.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ name_key(name));
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Const(c) => vec![c; n],
            Init::Uniform(b) => (0..n).map(|_| rng.gen_range(-b..=b)).collect(),
            Init::Normal(std) => {
                let dist = rand_distr::Normal::new(0.0, std).expect("finite std");
                (0..n).map(|_| rng.sample(dist)).collect()
            }
        };
        let var = Var::from_vec(data, shape, &Self::device())?;
        vars.insert(name.to_string(), var.clone());
        Ok(var)
    }

    /// Current values, keyed by name.
    pub fn snapshot(&self) -> HashMap<String, Tensor> {
        self.vars
            .lock()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().copy().expect("cpu copy")))
            .collect()
    }

    pub fn restore(&self, snapshot: &HashMap<String, Tensor>) -> Result<()> {
        for (k, v) in self.vars.lock().unwrap().iter() {
            let t = snapshot
                .get(k)
                .ok_or_else(|| ModelError::Checkpoint(format!("snapshot lacks {k}")))?;
            v.set(t)?;
        }
        Ok(())
    }

    /// SHA-256 over every parameter (name, then little-endian values).
    pub fn checksum(&self) -> String {
        self.checksum_prefix("")
    }

    pub fn checksum_prefix(&self, prefix: &str) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.named_vars_with_prefix(prefix) {
            h.update(k.as_bytes());
            let vals: Vec<f64> = v
                .as_tensor()
                .flatten_all()
                .and_then(|t| t.to_vec1())
                .expect("f64 parameter");
            for x in vals {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .vars
            .lock()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    /// Loads a strict store: building a module that asks for an unknown
    /// parameter fails instead of initializing it.
    pub fn load(path: &Path, seed: u64) -> Result<Self> {
        let tensors = candle_core::safetensors::load(path, &Self::device())?;
        let mut vars = BTreeMap::new();
        for (k, t) in tensors {
            if t.dtype() != DTYPE {
                return Err(ModelError::Checkpoint(format!("{k} is {:?}, expected f64", t.dtype())));
            }
            vars.insert(k, Var::from_tensor(&t)?);
        }
        Ok(Self {
            vars: Arc::new(Mutex::new(vars)),
            seed,
            strict: true,
        })
    }

    /// Deep copy with independent storage.
    pub fn deep_clone(&self) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (k, v) in self.vars.lock().unwrap().iter() {
            out.insert(k.clone(), Var::from_tensor(&v.as_tensor().copy()?)?);
        }
        Ok(Self {
            vars: Arc::new(Mutex::new(out)),
            seed: self.seed,
            strict: self.strict,
        })
    }
}

/// Independent RNG seed for a named stream under a run seed.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    seed ^ name_key(stream)
}

fn name_key(name: &str) -> u64 {
    let d = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[derive(Clone)]
pub struct ParamBuilder<'a> {
    store: &'a ParamStore,
    prefix: String,
    frozen: bool,
}

impl<'a> ParamBuilder<'a> {
    /// Child builder with `name` appended to the prefix.
    pub fn pp(&self, name: impl AsRef<str>) -> Self {
        let prefix = if self.prefix.is_empty() {
            name.as_ref().to_string()
        } else {
            format!("{}.{}", self.prefix, name.as_ref())
        };
        Self {
            store: self.store,
            prefix,
            frozen: self.frozen,
        }
    }

    pub fn get(&self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        let var = self.store.get_or_init(&full, shape, init)?;
        Ok(if self.frozen {
            var.as_detached_tensor()
        } else {
            var.as_tensor().clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_order_independent_and_seeded() {
        let a = ParamStore::new(3);
        let b = ParamStore::new(3);
        let c = ParamStore::new(4);
        let wa = a.builder().pp("x").get("w", &[2, 3], Init::Uniform(1.0)).unwrap();
        b.builder().pp("y").get("w", &[5], Init::Normal(1.0)).unwrap();
        let wb = b.builder().pp("x").get("w", &[2, 3], Init::Uniform(1.0)).unwrap();
        let wc = c.builder().pp("x").get("w", &[2, 3], Init::Uniform(1.0)).unwrap();
        let v = |t: &Tensor| t.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert_eq!(v(&wa), v(&wb));
        assert_ne!(v(&wa), v(&wc));
    }

    #[test]
    fn frozen_tensors_take_no_gradient() {
        let s = ParamStore::new(0);
        let live = s.builder().get("w", &[3], Init::Const(2.0)).unwrap();
        let frozen = s.frozen_builder().get("w", &[3], Init::Const(2.0)).unwrap();
        let loss = (live.sqr().unwrap().sum_all().unwrap() + frozen.sum_all().unwrap()).unwrap();
        let grads = loss.backward().unwrap();
        let g = grads.get(&live).unwrap().to_vec1::<f64>().unwrap();
        assert_eq!(g, vec![4.0; 3]);
        assert!(grads.get(&frozen).is_none());
    }

    #[test]
    fn save_load_is_strict() {
        let dir = tempfile::tempdir().unwrap();
        let s = ParamStore::new(1);
        s.builder().get("a", &[2, 2], Init::Normal(1.0)).unwrap();
        let path = dir.path().join("w.safetensors");
        s.save(&path).unwrap();
        let l = ParamStore::load(&path, 1).unwrap();
        assert_eq!(l.checksum(), s.checksum());
        assert!(l.builder().get("a", &[2, 2], Init::Zeros).is_ok());
        assert!(l.builder().get("b", &[1], Init::Zeros).is_err());
        assert!(l.builder().get("a", &[4], Init::Zeros).is_err());
    }
}
