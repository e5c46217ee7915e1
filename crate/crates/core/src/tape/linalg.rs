//! Matrix multiplication, batched over broadcast leading dimensions.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::shape::{broadcast_shapes, broadcast_strides, numel};
use crate::tape::{grad_slot, Node, Op, Tape, TensorId};

/// c[m,n] += a[m,k] · b[k,n]
fn gemm_nn<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        let cr = &mut c[i * n..(i + 1) * n];
        for (l, &av) in ar.iter().enumerate() {
            let br = &b[l * n..(l + 1) * n];
            for j in 0..n {
                cr[j] = cr[j] + av * br[j];
            }
        }
    }
}

/// c[m,k] += a[m,n] · b[k,n]ᵀ
fn gemm_nt<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let ar = &a[i * n..(i + 1) * n];
        for l in 0..k {
            let br = &b[l * n..(l + 1) * n];
            let mut acc = S::zero();
            for j in 0..n {
                acc = acc + ar[j] * br[j];
            }
            c[i * k + l] = c[i * k + l] + acc;
        }
    }
}

/// c[k,n] += a[m,k]ᵀ · b[m,n]
fn gemm_tn<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        let br = &b[i * n..(i + 1) * n];
        for (l, &av) in ar.iter().enumerate() {
            let cr = &mut c[l * n..(l + 1) * n];
            for j in 0..n {
                cr[j] = cr[j] + av * br[j];
            }
        }
    }
}

/// Walks a broadcast batch space yielding matrix offsets for both operands
/// and the linear batch index.
fn for_each_batch(
    batch: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let count = numel(batch);
    if batch.is_empty() {
        f(0, 0, 0);
        return;
    }
    let rank = batch.len();
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    for lin in 0..count {
        f(lin, oa, ob);
        for d in (0..rank).rev() {
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < batch[d] {
                break;
            }
            oa -= sa[d] * batch[d];
            ob -= sb[d] * batch[d];
            idx[d] = 0;
        }
    }
}

impl<S: Scalar> Tape<S> {
    /// `a [..., m, k] · b [..., k, n]`, broadcasting leading dimensions.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let ash = self.nodes[a.0].shape.clone();
        let bsh = self.nodes[b.0].shape.clone();
        if ash.len() < 2 || bsh.len() < 2 {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: ash, rhs: bsh });
        }
        let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let (k2, n) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
        if k != k2 {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: ash, rhs: bsh });
        }
        let abatch = &ash[..ash.len() - 2];
        let bbatch = &bsh[..bsh.len() - 2];
        let batch = broadcast_shapes("matmul", abatch, bbatch)?;
        let sa = broadcast_strides(abatch, &batch);
        let sb = broadcast_strides(bbatch, &batch);

        let mut out_shape = batch.clone();
        out_shape.extend([m, n]);
        let mut out = vec![S::zero(); numel(&out_shape)];
        {
            let da = &self.nodes[a.0].data;
            let db = &self.nodes[b.0].data;
            for_each_batch(&batch, &sa, &sb, |lin, oa, ob| {
                gemm_nn(
                    &da[oa * m * k..],
                    &db[ob * k * n..],
                    &mut out[lin * m * n..(lin + 1) * m * n],
                    m,
                    k,
                    n,
                );
            });
        }
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        Ok(self.push(out_shape, out, rg, Op::Matmul { a, b }))
    }
}

pub(crate) fn backward<S: Scalar>(nodes: &[Node<S>], grads: &mut [Option<Vec<S>>], i: usize, g: &[S]) {
    let Op::Matmul { a, b } = nodes[i].op else { unreachable!() };
    let ash = &nodes[a.0].shape;
    let bsh = &nodes[b.0].shape;
    let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
    let n = bsh[bsh.len() - 1];
    let batch = nodes[i].shape[..nodes[i].shape.len() - 2].to_vec();
    let sa = broadcast_strides(&ash[..ash.len() - 2], &batch);
    let sb = broadcast_strides(&bsh[..bsh.len() - 2], &batch);
    let da = &nodes[a.0].data;
    let db = &nodes[b.0].data;
    // dA += g · Bᵀ ; broadcast batches of A accumulate in place.
    if let Some(ga) = grad_slot(nodes, grads, a) {
        for_each_batch(&batch, &sa, &sb, |lin, oa, ob| {
            gemm_nt(&g[lin * m * n..], &db[ob * k * n..], &mut ga[oa * m * k..], m, n, k);
        });
    }
    // dB += Aᵀ · g
    if let Some(gb) = grad_slot(nodes, grads, b) {
        for_each_batch(&batch, &sa, &sb, |lin, oa, ob| {
            gemm_tn(&da[oa * m * k..], &g[lin * m * n..], &mut gb[ob * k * n..], m, k, n);
        });
    }
}
