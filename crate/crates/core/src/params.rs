//! Named trainable parameters.
//!
//! A [`ParamStore`] owns the canonical value buffers of a model, keyed by
//! unique hierarchical names ("backbone.stage1.block0.conv.weight"). Each
//! training step [`ParamStore::bind`]s the store into gradient-requiring
//! leaf tensors; after backward, the optimizer reads gradients off the
//! binding and writes updated values back into the store. Frozen inference
//! binds without gradients, which keeps graphs edge-free and makes
//! concurrent read-only use safe (the store itself is `Send + Sync`).

use crate::num::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
pub struct Parameter<F: Real> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<F>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore<F: Real> {
    entries: Vec<Parameter<F>>,
    by_name: HashMap<String, usize>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, shape: &[usize], values: Vec<F>) -> ParamId {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "parameter {name}: shape {shape:?} != value count {}",
            values.len()
        );
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name: {name}"
        );
        let idx = self.entries.len();
        self.by_name.insert(name.to_string(), idx);
        self.entries.push(Parameter {
            name: name.to_string(),
            shape: shape.to_vec(),
            values,
        });
        ParamId(idx)
    }

    /// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut Rng) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let values: Vec<F> = (0..n).map(|_| F::from_f64(rng.range(-bound, bound))).collect();
        self.add(name, shape, values)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        let n: usize = shape.iter().product();
        self.add(name, shape, vec![F::ZERO; n])
    }

    pub fn add_ones(&mut self, name: &str, shape: &[usize]) -> ParamId {
        let n: usize = shape.iter().product();
        self.add(name, shape, vec![F::ONE; n])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<F> {
        &self.entries[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn set_values(&mut self, id: ParamId, values: Vec<F>) {
        assert_eq!(self.entries[id.0].values.len(), values.len());
        self.entries[id.0].values = values;
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [F] {
        &mut self.entries[id.0].values
    }

    /// Iteration follows insertion order, which keeps every downstream
    /// consumer (optimizer, checkpoints) deterministic.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<F>)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    /// Materializes leaf tensors for one forward/backward pass.
    pub fn bind(&self, trainable: bool) -> Binding<F> {
        let leaves = self
            .entries
            .iter()
            .map(|e| {
                if trainable {
                    Tensor::leaf(&e.shape, e.values.clone())
                } else {
                    Tensor::from_vec(&e.shape, e.values.clone())
                }
            })
            .collect();
        Binding { leaves }
    }

    /// Converts precision while keeping names, shapes, and order. Used to
    /// instantiate an `f64` twin of an `f32` model for gradient checking.
    pub fn convert<G: Real>(&self) -> ParamStore<G> {
        let mut out = ParamStore::new();
        for e in &self.entries {
            let values: Vec<G> = e.values.iter().map(|&v| G::from_f64(v.to_f64())).collect();
            out.add(&e.name, &e.shape, values);
        }
        out
    }
}

/// Leaf tensors for one pass, indexed by [`ParamId`].
pub struct Binding<F: Real> {
    leaves: Vec<Tensor<F>>,
}

impl<F: Real> Binding<F> {
    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.leaves[id.0]
    }

    pub fn grad(&self, id: ParamId) -> Option<Vec<F>> {
        self.leaves[id.0].grad()
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Replaces the leaf for `id`; gradient checks use this to splice
    /// externally owned tensors into a model pass.
    pub fn replace(&mut self, id: ParamId, tensor: Tensor<F>) {
        assert_eq!(
            self.leaves[id.0].shape(),
            tensor.shape(),
            "replacement for parameter {} has wrong shape",
            id.0
        );
        self.leaves[id.0] = tensor;
    }
}
