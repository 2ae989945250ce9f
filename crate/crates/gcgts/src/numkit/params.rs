//! Named parameter registry with deterministic ordering. Registration order
//! is the canonical order for optimizer state and checkpoint payloads, so it
//! must not depend on hash iteration.

use std::collections::HashMap;

use super::{Scalar, Tensor};

pub struct ParamStore<S: Scalar> {
    entries: Vec<(String, Tensor<S>)>,
    by_name: HashMap<String, usize>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), by_name: HashMap::new() }
    }

    /// Registers a tensor under a unique name and returns its slot index.
    pub fn register(&mut self, name: &str, tensor: Tensor<S>) -> usize {
        assert!(
            !self.by_name.contains_key(name),
            "parameter '{name}' registered twice"
        );
        let idx = self.entries.len();
        self.by_name.insert(name.to_owned(), idx);
        self.entries.push((name.to_owned(), tensor));
        idx
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.entries[idx].0
    }

    pub fn tensor(&self, idx: usize) -> &Tensor<S> {
        &self.entries[idx].1
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor<S> {
        &mut self.entries[idx].1
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.index_of(name).map(|i| self.tensor(i))
    }

    /// Entries in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn clear_grads(&mut self) {
        for (_, t) in &mut self.entries {
            t.clear_grad();
        }
    }

    pub fn scale_grads(&mut self, c: S) {
        for (_, t) in &mut self.entries {
            t.scale_grad(c);
        }
    }

    /// Total number of scalar elements across all parameters.
    pub fn n_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}
