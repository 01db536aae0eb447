use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// How a freshly registered tensor is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Uniform in `[-a, a]`.
    Uniform(f64),
    /// Normal with mean 0 and the given standard deviation.
    Normal(f64),
}

/// Dense row-major matrix. Vectors are `n x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub trainable: bool,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            trainable: true,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Named collection of trainable tensors. Names are unique and shapes are
/// fixed once registered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    index: BTreeMap<String, ParamId>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new tensor. Panics on a duplicate name: parameter layouts
    /// are built by code, so a collision is a programming error.
    pub fn add(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name `{name}`"
        );
        let mut t = Tensor::zeros(rows, cols);
        match init {
            Init::Zeros => {}
            Init::Uniform(a) => t.data.iter_mut().for_each(|v| *v = rng.random_range(-a..=a)),
            Init::Normal(std) => {
                let normal = Normal::new(0.0, std).expect("valid std");
                t.data.iter_mut().for_each(|v| *v = normal.sample(rng));
            }
        }
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.tensors.push(t);
        id
    }

    pub fn insert_tensor(&mut self, name: &str, tensor: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.tensors.push(tensor);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Iterates in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.tensors
            .iter()
            .enumerate()
            .map(move |(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.tensors[id.0].trainable = trainable;
    }

    /// Copies values of every tensor that exists (by name) in `other`.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        for (name, &id) in &self.index {
            if let Ok(src) = other.id(name) {
                let src = other.get(src);
                let dst = &mut self.tensors[id.0];
                if src.shape() != dst.shape() {
                    return Err(Error::ShapeMismatch {
                        name: name.clone(),
                        expected: dst.shape(),
                        got: src.shape(),
                    });
                }
                dst.data.copy_from_slice(&src.data);
            }
        }
        Ok(())
    }

    /// Like [`ParamSet::load_from`], but every tensor of `self` must be
    /// present in `other`.
    pub fn load_all_from(&mut self, other: &ParamSet) -> Result<()> {
        if let Some(name) = self.index.keys().find(|n| other.id(n).is_err()) {
            return Err(Error::UnknownParam(name.clone()));
        }
        self.load_from(other)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// Gradient accumulator aligned with a [`ParamSet`]. Tensors that never
/// received a gradient stay unallocated.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    data: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn new(n_params: usize) -> Self {
        Self {
            data: vec![None; n_params],
        }
    }

    pub fn for_params(params: &ParamSet) -> Self {
        Self::new(params.len())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.data[id.0].as_deref()
    }

    pub fn entry(&mut self, id: ParamId, len: usize) -> &mut Vec<f64> {
        self.data[id.0].get_or_insert_with(|| vec![0.0; len])
    }

    pub fn add_assign(&mut self, other: &Grads) {
        assert_eq!(self.data.len(), other.data.len());
        for (dst, src) in self.data.iter_mut().zip(&other.data) {
            if let Some(src) = src {
                match dst {
                    Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
                    None => *dst = Some(src.clone()),
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.data.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.data
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Value of a single scalar entry, zero when unallocated.
    pub fn value(&self, id: ParamId, idx: usize) -> f64 {
        self.data[id.0].as_ref().map_or(0.0, |g| g[idx])
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_deref().map(|g| (ParamId(i), g)))
    }
}
