//! Shape-moving primitives: reshape, permute, broadcast, concat, narrow,
//! index select. Reshape aliases the input buffer; the rest materialize.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::shape::{axis_split, broadcast_strides, check_axis, numel, strides};
use crate::tape::{grad_slot, Node, Op, Tape, TensorId};

/// Walks linear output indices together with a strided source offset.
fn for_each_offset(shape: &[usize], src_strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let n = numel(shape);
    if n == 0 {
        return;
    }
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for lin in 0..n {
        f(lin, off);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += src_strides[d];
            if idx[d] < shape[d] {
                break;
            }
            off -= src_strides[d] * shape[d];
            idx[d] = 0;
        }
    }
}

impl<S: Scalar> Tape<S> {
    pub fn reshape(&mut self, x: TensorId, new_shape: &[usize]) -> Result<TensorId> {
        let node = &self.nodes[x.0];
        if numel(new_shape) != node.data.len() {
            return Err(Error::invalid(
                "reshape",
                format!("cannot view {:?} as {:?}", node.shape, new_shape),
            ));
        }
        let data = Arc::clone(&node.data);
        let rg = node.requires_grad;
        Ok(self.push_shared(new_shape.to_vec(), data, rg, Op::Reshape(x)))
    }

    pub fn permute(&mut self, x: TensorId, perm: &[usize]) -> Result<TensorId> {
        let node = &self.nodes[x.0];
        let rank = node.shape.len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid(
                "permute",
                format!("{perm:?} is not a permutation of rank {rank}"),
            ));
        }
        let in_strides = strides(&node.shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| node.shape[p]).collect();
        let out_src: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let src = Arc::clone(&node.data);
        let rg = node.requires_grad;
        let mut out = vec![S::zero(); src.len()];
        for_each_offset(&out_shape, &out_src, |lin, off| out[lin] = src[off]);
        Ok(self.push(out_shape, out, rg, Op::Permute { x, perm: perm.to_vec() }))
    }

    /// Swaps the last two axes; the batched transpose used by matmul callers.
    pub fn transpose_last(&mut self, x: TensorId) -> Result<TensorId> {
        let rank = self.nodes[x.0].shape.len();
        if rank < 2 {
            return Err(Error::invalid("transpose_last", "needs rank >= 2".to_string()));
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(rank - 2, rank - 1);
        self.permute(x, &perm)
    }

    pub fn broadcast_to(&mut self, x: TensorId, target: &[usize]) -> Result<TensorId> {
        let node = &self.nodes[x.0];
        if node.shape.len() > target.len() {
            return Err(Error::ShapeMismatch {
                op: "broadcast_to",
                lhs: node.shape.clone(),
                rhs: target.to_vec(),
            });
        }
        let offset = target.len() - node.shape.len();
        for (i, &d) in node.shape.iter().enumerate() {
            if d != 1 && d != target[offset + i] {
                return Err(Error::ShapeMismatch {
                    op: "broadcast_to",
                    lhs: node.shape.clone(),
                    rhs: target.to_vec(),
                });
            }
        }
        let bs = broadcast_strides(&node.shape, target);
        let src = Arc::clone(&node.data);
        let rg = node.requires_grad;
        let mut out = vec![S::zero(); numel(target)];
        for_each_offset(target, &bs, |lin, off| out[lin] = src[off]);
        Ok(self.push(target.to_vec(), out, rg, Op::BroadcastTo { x }))
    }

    pub fn concat(&mut self, parts: &[TensorId], axis: usize) -> Result<TensorId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat", "no inputs".to_string()))?;
        let base = self.nodes[first.0].shape.clone();
        check_axis("concat", &base, axis)?;
        let mut total = 0usize;
        for &p in parts {
            let sh = &self.nodes[p.0].shape;
            if sh.len() != base.len()
                || sh.iter().enumerate().any(|(d, &e)| d != axis && e != base[d])
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: sh.clone(),
                });
            }
            total += sh[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = axis_split(&out_shape, axis);
        let row_out = total * inner;
        let mut out = vec![S::zero(); numel(&out_shape)];
        let mut at = 0usize;
        for &p in parts {
            let len = self.nodes[p.0].shape[axis];
            let src = &self.nodes[p.0].data;
            let row_src = len * inner;
            for o in 0..outer {
                let dst = o * row_out + at * inner;
                out[dst..dst + row_src].copy_from_slice(&src[o * row_src..(o + 1) * row_src]);
            }
            at += len;
        }
        let rg = parts.iter().any(|&p| self.nodes[p.0].requires_grad);
        Ok(self.push(out_shape, out, rg, Op::Concat { parts: parts.to_vec(), axis }))
    }

    /// Inserts a size-1 axis in front of each part and concatenates.
    pub fn stack(&mut self, parts: &[TensorId], axis: usize) -> Result<TensorId> {
        let mut views = Vec::with_capacity(parts.len());
        for &p in parts {
            let mut sh = self.nodes[p.0].shape.clone();
            if axis > sh.len() {
                return Err(Error::invalid("stack", format!("axis {axis} out of range")));
            }
            sh.insert(axis, 1);
            views.push(self.reshape(p, &sh)?);
        }
        self.concat(&views, axis)
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, x: TensorId, axis: usize, start: usize, len: usize) -> Result<TensorId> {
        let node = &self.nodes[x.0];
        check_axis("narrow", &node.shape, axis)?;
        if start + len > node.shape[axis] {
            return Err(Error::invalid(
                "narrow",
                format!("[{start}, {}) exceeds axis size {}", start + len, node.shape[axis]),
            ));
        }
        let (outer, l, inner) = axis_split(&node.shape, axis);
        let mut out_shape = node.shape.clone();
        out_shape[axis] = len;
        let src = Arc::clone(&node.data);
        let rg = node.requires_grad;
        let mut out = vec![S::zero(); outer * len * inner];
        for o in 0..outer {
            let s = o * l * inner + start * inner;
            out[o * len * inner..(o + 1) * len * inner].copy_from_slice(&src[s..s + len * inner]);
        }
        Ok(self.push(out_shape, out, rg, Op::Narrow { x, axis, start }))
    }

    /// Gathers `indices` along `axis`.
    pub fn index_select(&mut self, x: TensorId, axis: usize, indices: &[usize]) -> Result<TensorId> {
        let node = &self.nodes[x.0];
        check_axis("index_select", &node.shape, axis)?;
        let (outer, l, inner) = axis_split(&node.shape, axis);
        if let Some(&bad) = indices.iter().find(|&&ix| ix >= l) {
            return Err(Error::invalid(
                "index_select",
                format!("index {bad} out of range for axis of size {l}"),
            ));
        }
        let mut out_shape = node.shape.clone();
        out_shape[axis] = indices.len();
        let src = Arc::clone(&node.data);
        let rg = node.requires_grad;
        let mut out = vec![S::zero(); outer * indices.len() * inner];
        for o in 0..outer {
            for (j, &ix) in indices.iter().enumerate() {
                let s = o * l * inner + ix * inner;
                let d = o * indices.len() * inner + j * inner;
                out[d..d + inner].copy_from_slice(&src[s..s + inner]);
            }
        }
        Ok(self.push(out_shape, out, rg, Op::IndexSelect { x, axis, indices: indices.to_vec() }))
    }
}

pub(crate) fn backward<S: Scalar>(nodes: &[Node<S>], grads: &mut [Option<Vec<S>>], i: usize, g: &[S]) {
    match &nodes[i].op {
        Op::Reshape(x) => {
            if let Some(gx) = grad_slot(nodes, grads, *x) {
                for j in 0..g.len() {
                    gx[j] = gx[j] + g[j];
                }
            }
        }
        Op::Permute { x, perm } => {
            let in_strides = strides(&nodes[x.0].shape);
            let out_src: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
            let out_shape = nodes[i].shape.clone();
            if let Some(gx) = grad_slot(nodes, grads, *x) {
                for_each_offset(&out_shape, &out_src, |lin, off| gx[off] = gx[off] + g[lin]);
            }
        }
        Op::BroadcastTo { x } => {
            let bs = broadcast_strides(&nodes[x.0].shape, &nodes[i].shape);
            let out_shape = nodes[i].shape.clone();
            if let Some(gx) = grad_slot(nodes, grads, *x) {
                for_each_offset(&out_shape, &bs, |lin, off| gx[off] = gx[off] + g[lin]);
            }
        }
        Op::Concat { parts, axis } => {
            let (outer, total, inner) = axis_split(&nodes[i].shape, *axis);
            let row_out = total * inner;
            let mut at = 0usize;
            for &p in parts {
                let len = nodes[p.0].shape[*axis];
                let row_src = len * inner;
                if let Some(gp) = grad_slot(nodes, grads, p) {
                    for o in 0..outer {
                        let s = o * row_out + at * inner;
                        for j in 0..row_src {
                            gp[o * row_src + j] = gp[o * row_src + j] + g[s + j];
                        }
                    }
                }
                at += len;
            }
        }
        Op::Narrow { x, axis, start } => {
            let (outer, l, inner) = axis_split(&nodes[x.0].shape, *axis);
            let len = nodes[i].shape[*axis];
            if let Some(gx) = grad_slot(nodes, grads, *x) {
                for o in 0..outer {
                    let d = o * l * inner + start * inner;
                    for j in 0..len * inner {
                        gx[d + j] = gx[d + j] + g[o * len * inner + j];
                    }
                }
            }
        }
        Op::IndexSelect { x, axis, indices } => {
            let (outer, l, inner) = axis_split(&nodes[x.0].shape, *axis);
            if let Some(gx) = grad_slot(nodes, grads, *x) {
                for o in 0..outer {
                    for (j, &ix) in indices.iter().enumerate() {
                        let d = o * l * inner + ix * inner;
                        let s = o * indices.len() * inner + j * inner;
                        for t in 0..inner {
                            gx[d + t] = gx[d + t] + g[s + t];
                        }
                    }
                }
            }
        }
        _ => unreachable!("structure backward on foreign op"),
    }
}
