use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{NeuralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named trainable tensors. Names are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(NeuralError::Shape(format!("duplicate parameter {name}")));
        }
        let id = self.values.len();
        self.names.push(name.to_string());
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| NeuralError::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::all_finite)
    }

    pub fn to_named(&self) -> BTreeMap<String, Tensor> {
        self.names.iter().cloned().zip(self.values.iter().cloned()).collect()
    }

    /// Parameters in insertion order, which `from_list` preserves.
    pub fn to_list(&self) -> Vec<NamedTensor> {
        self.names.iter().zip(&self.values).map(|(n, t)| NamedTensor { name: n.clone(), tensor: t.clone() }).collect()
    }

    pub fn from_list(list: Vec<NamedTensor>) -> Result<Self> {
        let mut store = Self::new();
        for nt in list {
            if nt.tensor.rows * nt.tensor.cols != nt.tensor.data.len() {
                return Err(NeuralError::Shape(format!("{} has inconsistent shape", nt.name)));
            }
            store.insert(&nt.name, nt.tensor)?;
        }
        Ok(store)
    }

    pub fn from_named(named: BTreeMap<String, Tensor>) -> Self {
        let mut store = Self::new();
        for (name, value) in named {
            store.insert(&name, value).expect("map keys are unique");
        }
        store
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    #[serde(flatten)]
    pub tensor: Tensor,
}

/// Gradient buffers shaped like a ParamStore.
#[derive(Debug, Clone)]
pub struct GradStore {
    pub(crate) grads: Vec<Tensor>,
}

impl GradStore {
    pub fn for_params(params: &ParamStore) -> Self {
        Self { grads: params.values.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect() }
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f32) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction, constant learning rate and no weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    pub fn new(params: &ParamStore, cfg: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params.values.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
        Self { cfg, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &GradStore) {
        self.t += 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, eps } = self.cfg;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (i, p) in params.values.iter_mut().enumerate() {
            let g = &grads.grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..p.data.len() {
                let gj = g.data[j];
                m.data[j] = b1 * m.data[j] + (1.0 - b1) * gj;
                v.data[j] = b2 * v.data[j] + (1.0 - b2) * gj * gj;
                let mh = m.data[j] / c1;
                let vh = v.data[j] / c2;
                p.data[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

pub fn normal_tensor(rows: usize, cols: usize, std: f32, rng: &mut impl Rng) -> Tensor {
    let dist = Normal::new(0.0f32, std).expect("std is finite and positive");
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for small dense layers.
pub fn fan_in_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect())
}
