use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::TensorShape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
            grad: None,
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
            grad: None,
        }
    }

    /// Glorot-uniform initialisation for a `[fan_in, fan_out]` matrix.
    pub fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Tensor {
            shape: vec![fan_in, fan_out],
            data: (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect(),
            grad: None,
        }
    }

    pub fn normal<R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> Self {
        let d = Normal::new(0.0, std).expect("finite std");
        Tensor {
            shape: shape.to_vec(),
            data: (0..shape.iter().product()).map(|_| d.sample(rng)).collect(),
            grad: None,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Gradients of every parameter, indexed like the owning [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn get(&self, id: usize) -> &[f64] {
        &self.0[id]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

/// Named parameters in insertion order plus optimiser moments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
    pub(crate) adam: AdamState,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: &str, t: Tensor) -> usize {
        assert!(!self.index.contains_key(name), "duplicate parameter `{name}`");
        let id = self.tensors.len();
        self.names.push(name.to_string());
        self.adam.m.push(vec![0.0; t.len()]);
        self.adam.v.push(vec![0.0; t.len()]);
        self.tensors.push(t);
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Graph(format!("unknown parameter `{name}`")))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn tensor(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn tensor_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.adam.step
    }

    /// Add gradients into each tensor's `grad` buffer.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (t, g) in self.tensors.iter_mut().zip(&grads.0) {
            let buf = t.grad.get_or_insert_with(|| vec![0.0; g.len()]);
            for (b, v) in buf.iter_mut().zip(g) {
                *b += v;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            if let Some(g) = &mut t.grad {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Parameter values only (moments and grads dropped).
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| t.data.clone()).collect()
    }

    pub fn restore(&mut self, snap: &[Vec<f64>]) {
        for (t, s) in self.tensors.iter_mut().zip(snap) {
            t.data.copy_from_slice(s);
        }
    }
}
