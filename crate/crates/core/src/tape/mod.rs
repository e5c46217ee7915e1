//! Dynamic computation tape: eager forward evaluation with an ordered record
//! of primitive operations, replayed in reverse for gradients.
//!
//! Nodes are appended in creation order, so the record is topologically
//! sorted by construction: every entry's parents precede it. Tensor values
//! are immutable once created; a tape is confined to the thread that built
//! it. Gradients live beside the nodes and are filled in by [`Tape::backward`].

mod conv;
mod elementwise;
mod linalg;
mod reduce;
mod sample;
mod structure;

use std::sync::Arc;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::params::Param;
use crate::scalar::Scalar;
use crate::shape::numel;

/// Handle to a tensor recorded on a tape.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TensorId(pub(crate) usize);

// Some recorded fields (stop-grad parent, reduction flags) exist to keep the
// operation record complete for debugging even where backward does not need
// them.
#[allow(dead_code)]
#[derive(Debug)]
pub(crate) enum Op<S> {
    Leaf,
    Constant,
    StopGrad(TensorId),
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Div(TensorId, TensorId),
    Atan2(TensorId, TensorId),
    Neg(TensorId),
    Exp(TensorId),
    Log(TensorId),
    Sqrt(TensorId),
    Sigmoid(TensorId),
    Relu(TensorId),
    Softplus(TensorId),
    Sin(TensorId),
    Cos(TensorId),
    Abs(TensorId),
    AddScalar { x: TensorId },
    MulScalar { x: TensorId, c: S },
    ClampMin { x: TensorId, c: S },
    Reshape(TensorId),
    Permute { x: TensorId, perm: Vec<usize> },
    BroadcastTo { x: TensorId },
    Concat { parts: Vec<TensorId>, axis: usize },
    Narrow { x: TensorId, axis: usize, start: usize },
    IndexSelect { x: TensorId, axis: usize, indices: Vec<usize> },
    Matmul { a: TensorId, b: TensorId },
    Conv2d { input: TensorId, weight: TensorId, stride: usize, pad: (usize, usize) },
    GridSample { input: TensorId, grid: TensorId },
    SumAxes { x: TensorId, axes: Vec<usize>, keep: bool },
    MaxAxis { x: TensorId, axis: usize, arg: Vec<usize> },
    Softmax { x: TensorId, axis: usize },
    LogSumExp { x: TensorId, axis: usize },
    LayerNorm { x: TensorId, gamma: TensorId, beta: TensorId, eps: S },
}

#[derive(Debug)]
pub(crate) struct Node<S> {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Arc<Vec<S>>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op<S>,
}

#[derive(Debug)]
pub struct Tape<S> {
    pub(crate) nodes: Vec<Node<S>>,
    pub(crate) grads: Vec<Option<Vec<S>>>,
    leaves: IndexMap<String, TensorId>,
    backward_done: bool,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new(), leaves: IndexMap::new(), backward_done: false }
    }

    pub(crate) fn push(
        &mut self,
        shape: Vec<usize>,
        data: Vec<S>,
        requires_grad: bool,
        op: Op<S>,
    ) -> TensorId {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node { shape, data: Arc::new(data), requires_grad, op });
        self.grads.push(None);
        TensorId(self.nodes.len() - 1)
    }

    pub(crate) fn push_shared(
        &mut self,
        shape: Vec<usize>,
        data: Arc<Vec<S>>,
        requires_grad: bool,
        op: Op<S>,
    ) -> TensorId {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node { shape, data, requires_grad, op });
        self.grads.push(None);
        TensorId(self.nodes.len() - 1)
    }

    /// Records an input tensor that does not take gradients.
    pub fn constant(&mut self, shape: &[usize], data: Vec<S>) -> Result<TensorId> {
        if numel(shape) != data.len() {
            return Err(Error::invalid(
                "constant",
                format!("shape {shape:?} needs {} values, got {}", numel(shape), data.len()),
            ));
        }
        Ok(self.push(shape.to_vec(), data, false, Op::Constant))
    }

    /// A rank-0 constant.
    pub fn scalar(&mut self, v: S) -> TensorId {
        self.push(Vec::new(), vec![v], false, Op::Constant)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> TensorId {
        self.push(shape.to_vec(), vec![S::zero(); numel(shape)], false, Op::Constant)
    }

    pub fn full(&mut self, shape: &[usize], v: S) -> TensorId {
        self.push(shape.to_vec(), vec![v; numel(shape)], false, Op::Constant)
    }

    /// Records a named parameter as a differentiable leaf. Repeated calls
    /// with the same name return the same node so gradient contributions
    /// from every use accumulate in one buffer.
    pub fn leaf(&mut self, name: &str, param: &Param<S>) -> TensorId {
        if let Some(&id) = self.leaves.get(name) {
            return id;
        }
        let id = self.push_shared(param.shape.clone(), Arc::clone(&param.data), true, Op::Leaf);
        self.leaves.insert(name.to_string(), id);
        id
    }

    pub fn value(&self, t: TensorId) -> &[S] {
        &self.nodes[t.0].data
    }

    pub fn shape(&self, t: TensorId) -> &[usize] {
        &self.nodes[t.0].shape
    }

    pub fn requires_grad(&self, t: TensorId) -> bool {
        self.nodes[t.0].requires_grad
    }

    /// Gradient of the last backward pass, if this tensor received one.
    pub fn grad(&self, t: TensorId) -> Option<&[S]> {
        self.grads[t.0].as_deref()
    }

    /// Named leaves in registration order with their gradients.
    pub fn leaf_grads(&self) -> impl Iterator<Item = (&str, Option<&[S]>)> {
        self.leaves.iter().map(|(name, id)| (name.as_str(), self.grads[id.0].as_deref()))
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Clears gradients so another backward pass may run.
    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
        self.backward_done = false;
    }

    /// Reverse pass from a scalar root: fills `grad` for every tensor with
    /// `requires_grad` that the root depends on.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let rn = &self.nodes[root.0];
        if numel(&rn.shape) != 1 {
            return Err(Error::NonScalarRoot(rn.shape.clone()));
        }
        self.backward_done = true;
        if !rn.requires_grad {
            return Ok(());
        }
        self.grads[root.0] = Some(vec![S::one()]);
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        for i in (0..=root.0).rev() {
            if !nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            Self::dispatch(nodes, grads, i, &g);
            grads[i] = Some(g);
        }
        Ok(())
    }

    fn dispatch(nodes: &[Node<S>], grads: &mut [Option<Vec<S>>], i: usize, g: &[S]) {
        match &nodes[i].op {
            Op::Leaf | Op::Constant | Op::StopGrad(_) => {}
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::Atan2(a, b) => {
                elementwise::backward_binary(nodes, grads, i, *a, *b, g);
            }
            Op::Neg(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Sqrt(x)
            | Op::Sigmoid(x)
            | Op::Relu(x)
            | Op::Softplus(x)
            | Op::Sin(x)
            | Op::Cos(x)
            | Op::Abs(x)
            | Op::AddScalar { x }
            | Op::MulScalar { x, .. }
            | Op::ClampMin { x, .. } => {
                elementwise::backward_unary(nodes, grads, i, *x, g);
            }
            Op::Reshape(_)
            | Op::Permute { .. }
            | Op::BroadcastTo { .. }
            | Op::Concat { .. }
            | Op::Narrow { .. }
            | Op::IndexSelect { .. } => {
                structure::backward(nodes, grads, i, g);
            }
            Op::Matmul { .. } => linalg::backward(nodes, grads, i, g),
            Op::Conv2d { .. } => conv::backward(nodes, grads, i, g),
            Op::GridSample { .. } => sample::backward(nodes, grads, i, g),
            Op::SumAxes { .. }
            | Op::MaxAxis { .. }
            | Op::Softmax { .. }
            | Op::LogSumExp { .. }
            | Op::LayerNorm { .. } => reduce::backward(nodes, grads, i, g),
        }
    }
}

/// Gradient buffer for `p`, allocated on first touch; `None` when the
/// parent does not take gradients.
pub(crate) fn grad_slot<'a, S: Scalar>(
    nodes: &[Node<S>],
    grads: &'a mut [Option<Vec<S>>],
    p: TensorId,
) -> Option<&'a mut [S]> {
    if !nodes[p.0].requires_grad {
        return None;
    }
    let slot = &mut grads[p.0];
    if slot.is_none() {
        *slot = Some(vec![S::zero(); nodes[p.0].data.len()]);
    }
    slot.as_deref_mut()
}
