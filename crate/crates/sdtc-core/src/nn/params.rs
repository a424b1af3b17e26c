//! Named parameter storage.
//!
//! Every trainable tensor lives here under a stable hierarchical name.
//! Initialization draws from an rng derived from (store seed, name), so
//! parameter values do not depend on creation order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tape, Tensor};
use crate::{derive_seed, fnv1a64};

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    Constant(f64),
    /// Uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
    XavierUniform { fan_in: usize, fan_out: usize },
    /// Uniform in `[-a, a]`.
    Uniform { a: f64 },
}

pub struct ParamStore<S: Scalar> {
    seed: u64,
    params: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            seed,
            params: BTreeMap::new(),
        }
    }

    /// Create a parameter. Names must be unique across the store.
    pub fn add(&mut self, name: &str, dims: &[usize], init: Init) -> Result<String> {
        if self.params.contains_key(name) {
            return Err(Error::contract(format!("parameter {name} already exists")));
        }
        let shape = Shape::new(dims)?;
        let n = shape.numel();
        let data: Vec<S> = match init {
            Init::Zeros => vec![S::ZERO; n],
            Init::Ones => vec![S::ONE; n],
            Init::Constant(c) => vec![S::from_f64(c); n],
            Init::XavierUniform { fan_in, fan_out } => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                self.sample_uniform(name, n, a)
            }
            Init::Uniform { a } => self.sample_uniform(name, n, a),
        };
        self.params
            .insert(name.to_string(), Tensor::from_vec(dims, data)?);
        Ok(name.to_string())
    }

    fn sample_uniform(&self, name: &str, n: usize, a: f64) -> Vec<S> {
        let seed = derive_seed(self.seed, &[fnv1a64(name.as_bytes())]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| S::from_f64((rng.gen::<f64>() * 2.0 - 1.0) * a))
            .collect()
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Replace a parameter's values, keeping its shape.
    pub fn set(&mut self, name: &str, tensor: Tensor<S>) -> Result<()> {
        let current = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name}")))?;
        if current.shape() != tensor.shape() {
            return Err(Error::dimension(
                "param_set",
                format!(
                    "parameter {name} has shape {}, got {}",
                    current.shape(),
                    tensor.shape()
                ),
            ));
        }
        *current = tensor.detach();
        Ok(())
    }

    /// Mutate a parameter's raw values in place.
    pub fn update(&mut self, name: &str, f: impl FnOnce(&mut [S])) -> Result<()> {
        let current = self
            .params
            .get(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name}")))?;
        let mut data = current.data().to_vec();
        f(&mut data);
        let dims = current.dims().to_vec();
        self.params
            .insert(name.to_string(), Tensor::from_vec(&dims, data)?);
        Ok(())
    }

    /// Iterate `(name, tensor)` in sorted name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.params.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }

    /// Taped view for a training forward pass.
    pub fn bind(&self, tape: &Tape<S>) -> Bound<S> {
        let map = self
            .params
            .iter()
            .map(|(n, t)| (n.clone(), tape.leaf(t)))
            .collect();
        Bound { map }
    }

    /// Untaped view for inference.
    pub fn bind_frozen(&self) -> Bound<S> {
        let map = self
            .params
            .iter()
            .map(|(n, t)| (n.clone(), t.detach()))
            .collect();
        Bound { map }
    }

    /// Order- and value-sensitive digest of all parameters.
    pub fn checksum(&self) -> u64 {
        let mut bytes = Vec::new();
        for (name, t) in &self.params {
            bytes.extend_from_slice(name.as_bytes());
            for v in t.data() {
                bytes.extend_from_slice(&v.to_f64().to_bits().to_le_bytes());
            }
        }
        fnv1a64(&bytes)
    }

    /// Independent copy sharing storage until the next `update`/`set`.
    pub fn clone_values(&self) -> ParamStore<S> {
        ParamStore {
            seed: self.seed,
            params: self.params.clone(),
        }
    }

    /// Rebuild with identical names/shapes in another precision.
    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            seed: self.seed,
            params: self
                .params
                .iter()
                .map(|(n, t)| (n.clone(), t.cast::<T>()))
                .collect(),
        }
    }
}

/// Per-forward-pass view of the parameters (taped or frozen).
pub struct Bound<S: Scalar> {
    map: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> Bound<S> {
    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.map
            .get(name)
            .ok_or_else(|| Error::contract(format!("parameter {name} not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.map.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Collect per-parameter gradients from a backward pass, in name order.
    /// Parameters the loss never touched get zero gradients.
    pub fn collect_grads(&self, grads: &crate::tensor::GradMap<S>) -> BTreeMap<String, Tensor<S>> {
        self.map
            .iter()
            .map(|(n, t)| {
                let g = match grads.get(t) {
                    Some(g) => g.clone(),
                    None => Tensor::zeros(t.dims()).expect("zeros like param"),
                };
                (n.clone(), g)
            })
            .collect()
    }
}

/// Convenience for building hierarchical names.
pub fn scoped(prefix: &str, leaf: &str) -> String {
    if prefix.is_empty() {
        leaf.to_string()
    } else {
        format!("{prefix}.{leaf}")
    }
}
