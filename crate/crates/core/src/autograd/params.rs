use std::collections::HashMap;

use rand::Rng;

use super::{GraphError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable tensors. Registration order fixes ids and the checkpoint
/// layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// # Panics
    /// If `name` is already registered.
    pub fn add(&mut self, name: &str, tensor: Tensor) -> ParamId {
        assert!(!self.by_name.contains_key(name), "parameter `{name}` registered twice");
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn add_uniform<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, scale: f64, rng: &mut R) -> ParamId {
        self.add(name, Tensor::uniform(rows, cols, scale, rng))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
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

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names.iter().zip(&self.tensors).enumerate().map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Overwrites every parameter with the same-named tensor from `other`.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<(), GraphError> {
        for (i, name) in self.names.iter().enumerate() {
            let src = other.id(name).ok_or_else(|| GraphError::MissingParam(name.clone()))?;
            let src = other.get(src);
            if src.shape() != self.tensors[i].shape() {
                return Err(GraphError::Shape {
                    op: "load",
                    left: self.tensors[i].shape(),
                    right: src.shape(),
                });
            }
            self.tensors[i] = src.clone();
        }
        Ok(())
    }
}

/// Gradient buffers aligned with a [`ParamStore`]. An empty buffer means the
/// parameter received no gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    bufs: Vec<Vec<f64>>,
    lens: Vec<usize>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self { bufs: vec![Vec::new(); store.len()], lens: store.tensors.iter().map(Tensor::len).collect() }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        let b = &self.bufs[id.0];
        (!b.is_empty()).then_some(b.as_slice())
    }

    pub(crate) fn slot(&mut self, id: ParamId) -> &mut Vec<f64> {
        let b = &mut self.bufs[id.0];
        if b.is_empty() {
            b.resize(self.lens[id.0], 0.0);
        }
        b
    }

    /// Element `i` of the gradient of `id` (zero when absent).
    pub fn value(&self, id: ParamId, i: usize) -> f64 {
        self.bufs[id.0].get(i).copied().unwrap_or(0.0)
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (i, b) in other.bufs.iter().enumerate() {
            if b.is_empty() {
                continue;
            }
            let dst = self.slot(ParamId(i));
            for (d, s) in dst.iter_mut().zip(b) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for b in &mut self.bufs {
            b.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.bufs.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn all_finite(&self) -> bool {
        self.bufs.iter().flatten().all(|x| x.is_finite())
    }
}
