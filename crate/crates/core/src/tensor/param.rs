use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How a parameter's initial values are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    Normal { mean: f64, std: f64 },
    Constant { value: f64 },
    /// Square matrices become the identity; anything else is a one-hot on its
    /// last element (a mixing vector that selects the most recent input).
    Identity,
}

impl InitSpec {
    pub fn normal(std: f64) -> Self {
        InitSpec::Normal { mean: 0.0, std }
    }

    pub fn constant(value: f64) -> Self {
        InitSpec::Constant { value }
    }

    /// Deterministic initial values for a parameter named `name` under `seed`.
    pub fn materialize<T: Scalar>(&self, shape: &[usize], seed: u64, name: &str) -> Vec<T> {
        let n: usize = shape.iter().product();
        match *self {
            InitSpec::Constant { value } => vec![T::of(value); n],
            InitSpec::Normal { mean, std } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name));
                let dist = Normal::new(mean, std).expect("finite normal parameters");
                (0..n).map(|_| T::of(dist.sample(&mut rng))).collect()
            }
            InitSpec::Identity => {
                let mut v = vec![T::zero(); n];
                if shape.len() == 2 && shape[0] == shape[1] {
                    for i in 0..shape[0] {
                        v[i * shape[1] + i] = T::one();
                    }
                } else {
                    v[n - 1] = T::one();
                }
                v
            }
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// A named, trainable leaf tensor with a replayable initialization.
#[derive(Debug, Clone)]
pub struct Parameter<T: Scalar> {
    pub name: String,
    pub init: InitSpec,
    pub tensor: Tensor<T>,
}

/// Ordered collection of a model's parameters, unique by name.
#[derive(Debug, Clone)]
pub struct ParamStore<T: Scalar> {
    seed: u64,
    params: Vec<Parameter<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            seed,
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Register a parameter and return its tensor handle.
    pub fn add(&mut self, name: &str, shape: &[usize], init: InitSpec) -> Result<Tensor<T>> {
        if self.index.contains_key(name) {
            return Err(Error::contract(format!("duplicate parameter name `{name}`")));
        }
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::contract(format!("parameter `{name}` has empty shape {shape:?}")));
        }
        let tensor = Tensor::leaf(init.materialize(shape, self.seed, name), shape);
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Parameter {
            name: name.to_string(),
            init,
            tensor: tensor.clone(),
        });
        Ok(tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Parameter<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn tensors(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| p.tensor.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grad(&self) {
        self.params.iter().for_each(|p| p.tensor.zero_grad());
    }

    /// Restore every parameter to its initial values.
    pub fn reinitialize(&self) {
        for p in &self.params {
            p.tensor
                .set_value(p.init.materialize(p.tensor.shape(), self.seed, &p.name));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_replayable_and_name_dependent() {
        let a: Vec<f64> = InitSpec::normal(0.02).materialize(&[4, 4], 7, "w");
        let b: Vec<f64> = InitSpec::normal(0.02).materialize(&[4, 4], 7, "w");
        let c: Vec<f64> = InitSpec::normal(0.02).materialize(&[4, 4], 7, "v");
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn identity_init_shapes() {
        let m: Vec<f64> = InitSpec::Identity.materialize(&[2, 2], 0, "m");
        assert_eq!(m, vec![1.0, 0.0, 0.0, 1.0]);
        let v: Vec<f64> = InitSpec::Identity.materialize(&[3], 0, "v");
        assert_eq!(v, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn names_are_unique() {
        let mut store = ParamStore::<f64>::new(1);
        store.add("a", &[2], InitSpec::constant(1.0)).unwrap();
        assert!(store.add("a", &[3], InitSpec::constant(1.0)).is_err());
        assert_eq!(store.numel(), 2);
    }

    #[test]
    fn reinitialize_replays_init() {
        let mut store = ParamStore::<f64>::new(3);
        let w = store.add("w", &[3], InitSpec::normal(1.0)).unwrap();
        let before = w.to_vec();
        w.set_value(vec![0.0; 3]);
        store.reinitialize();
        assert_eq!(w.to_vec(), before);
    }
}
