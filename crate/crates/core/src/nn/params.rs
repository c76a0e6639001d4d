//! Named parameter collections shared by models, optimizers, and
//! checkpoints.

use ndarray::ArrayD;

use super::{Graph, NodeId};

/// An ordered set of named tensors. Order is the identity used to pair
/// parameters with optimizer slots and gradient vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<ArrayD<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: ArrayD<f64>) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, index: usize) -> &ArrayD<f64> {
        &self.tensors[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut ArrayD<f64> {
        &mut self.tensors[index]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn by_name(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.names
            .iter()
            .map(|n| n.as_str())
            .zip(self.tensors.iter())
    }

    /// Total scalar count across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// True when both sets have identical names and tensor shapes.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(other.tensors.iter())
                .all(|(a, b)| a.shape() == b.shape())
    }

    /// Registers every tensor as a leaf in `graph`, in set order.
    pub fn bind(&self, graph: &mut Graph, needs_grad: bool) -> Vec<NodeId> {
        self.tensors
            .iter()
            .map(|t| graph.leaf(t.clone(), needs_grad))
            .collect()
    }

    /// One `name<TAB>shape` line per tensor.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for (name, t) in self.iter() {
            out.push_str(&format!("{name}\t{:?}\n", t.shape()));
        }
        out
    }

    /// Maximum absolute difference across all tensors of two layouts.
    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        assert!(self.same_layout(other));
        let mut worst = 0.0f64;
        for (a, b) in self.tensors.iter().zip(other.tensors.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }
}
