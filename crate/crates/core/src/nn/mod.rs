//! Minimal eager tensor-autodiff engine used by the generator,
//! discriminator, and segmenter.
//!
//! Values are `f64` dynamic-dimension arrays. A [`Graph`] is a tape: every
//! operation computes its value immediately and records a backward closure
//! that routes upstream gradients to its parents. Reverse traversal of the
//! tape therefore yields exact gradients with deterministic accumulation
//! order, which the reproducibility contracts of the training loop rely on.

mod adam;
mod conv;
mod gradcheck;
mod init;
mod ops;
mod params;
#[cfg(test)]
mod tests;

pub use adam::AdamState;
pub use conv::{conv2d_forward, conv_out_dim};
pub use gradcheck::{central_diff_grad, grads_close, max_rel_err};
pub use init::Init;
pub use params::ParamSet;

use ndarray::{ArrayD, IxDyn};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

type BackFn = Box<dyn Fn(&Graph, &ArrayD<f64>) -> Vec<(NodeId, ArrayD<f64>)>>;

struct Node {
    value: ArrayD<f64>,
    needs_grad: bool,
    backward: Option<BackFn>,
}

/// An eagerly evaluated computation tape.
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Grads {
    by_node: Vec<Option<ArrayD<f64>>>,
}

impl Grads {
    pub fn get(&self, id: NodeId) -> Option<&ArrayD<f64>> {
        self.by_node[id.0].as_ref()
    }

    /// Gradient of a node, or zeros of its shape when it never received one.
    pub fn get_or_zeros(&self, g: &Graph, id: NodeId) -> ArrayD<f64> {
        match self.by_node[id.0] {
            Some(ref v) => v.clone(),
            None => ArrayD::zeros(g.value(id).raw_dim()),
        }
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub(crate) fn push(
        &mut self,
        value: ArrayD<f64>,
        needs_grad: bool,
        backward: Option<BackFn>,
    ) -> NodeId {
        self.nodes.push(Node {
            value,
            needs_grad,
            backward,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf node. Gradients are only tracked through nodes whose
    /// ancestry contains at least one `needs_grad` leaf.
    pub fn leaf(&mut self, value: ArrayD<f64>, needs_grad: bool) -> NodeId {
        self.push(value, needs_grad, None)
    }

    /// A leaf that never requires gradients.
    pub fn constant(&mut self, value: ArrayD<f64>) -> NodeId {
        self.leaf(value, false)
    }

    /// A scalar constant with shape `[1]`.
    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(ArrayD::from_elem(IxDyn(&[1]), v))
    }

    pub fn value(&self, id: NodeId) -> &ArrayD<f64> {
        &self.nodes[id.0].value
    }

    /// Value of a scalar (single-element) node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        *self.nodes[id.0].value.iter().next().unwrap()
    }

    pub fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn any_needs_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.needs_grad(*id))
    }

    /// Reverse-mode sweep from a scalar root. Accumulation follows reverse
    /// tape order, so repeated sweeps over the same graph are bit-identical.
    pub fn backward(&self, root: NodeId) -> Grads {
        assert_eq!(
            self.value(root).len(),
            1,
            "backward root must be a scalar node"
        );
        let mut by_node: Vec<Option<ArrayD<f64>>> = Vec::with_capacity(self.nodes.len());
        by_node.resize_with(self.nodes.len(), || None);
        by_node[root.0] = Some(ArrayD::from_elem(self.value(root).raw_dim(), 1.0));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(ref upstream) = by_node[i] else {
                continue;
            };
            let Some(ref back) = self.nodes[i].backward else {
                continue;
            };
            let contributions = back(self, upstream);
            for (pid, contrib) in contributions {
                debug_assert!(pid.0 < i, "backward edge must point to an earlier node");
                if !self.nodes[pid.0].needs_grad {
                    continue;
                }
                match by_node[pid.0] {
                    Some(ref mut acc) => *acc += &contrib,
                    None => by_node[pid.0] = Some(contrib),
                }
            }
        }
        Grads { by_node }
    }
}

/// Broadcast two shapes following the usual trailing-dimension rules.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    let mut out = vec![0usize; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        assert!(
            da == db || da == 1 || db == 1,
            "shapes {a:?} and {b:?} do not broadcast"
        );
        out[i] = da.max(db);
    }
    out
}

/// Sum a gradient down to a (possibly broadcast-expanded) input shape.
pub(crate) fn reduce_to_shape(grad: ArrayD<f64>, target: &[usize]) -> ArrayD<f64> {
    use ndarray::Axis;
    let mut out = grad;
    while out.ndim() > target.len() {
        out = out.sum_axis(Axis(0));
    }
    for ax in 0..target.len() {
        if out.shape()[ax] != target[ax] {
            debug_assert_eq!(target[ax], 1);
            out = out.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    out
}
