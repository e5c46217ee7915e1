//! Reductions and normalizations over named axes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::shape::{axis_split, broadcast_strides, check_axis, numel};
use crate::tape::{grad_slot, Node, Op, Tape, TensorId};

fn reduced_shape(shape: &[usize], axes: &[usize], keep: bool) -> Vec<usize> {
    if keep {
        let mut s = shape.to_vec();
        for &a in axes {
            s[a] = 1;
        }
        s
    } else {
        shape
            .iter()
            .enumerate()
            .filter(|(d, _)| !axes.contains(d))
            .map(|(_, &e)| e)
            .collect()
    }
}

/// Strides that map an input index to its reduction bucket.
fn bucket_strides(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let keep: Vec<usize> = shape
        .iter()
        .enumerate()
        .map(|(d, &e)| if axes.contains(&d) { 1 } else { e })
        .collect();
    broadcast_strides(&keep, shape)
}

fn walk_buckets(shape: &[usize], bstrides: &[usize], mut f: impl FnMut(usize, usize)) {
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
            off += bstrides[d];
            if idx[d] < shape[d] {
                break;
            }
            off -= bstrides[d] * shape[d];
            idx[d] = 0;
        }
    }
}

impl<S: Scalar> Tape<S> {
    pub fn sum_axes(&mut self, x: TensorId, axes: &[usize], keep: bool) -> Result<TensorId> {
        let shape = self.nodes[x.0].shape.clone();
        let mut seen = vec![false; shape.len()];
        for &a in axes {
            check_axis("sum_axes", &shape, a)?;
            if std::mem::replace(&mut seen[a], true) {
                return Err(Error::invalid("sum_axes", format!("duplicate axis {a}")));
            }
        }
        let out_shape = reduced_shape(&shape, axes, keep);
        let bs = bucket_strides(&shape, axes);
        let mut out = vec![S::zero(); numel(&out_shape)];
        {
            let xd = &self.nodes[x.0].data;
            walk_buckets(&shape, &bs, |lin, off| out[off] = out[off] + xd[lin]);
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(out_shape, out, rg, Op::SumAxes { x, axes: axes.to_vec(), keep }))
    }

    pub fn mean_axes(&mut self, x: TensorId, axes: &[usize], keep: bool) -> Result<TensorId> {
        let count: usize = axes.iter().map(|&a| self.nodes[x.0].shape[a]).product();
        let s = self.sum_axes(x, axes, keep)?;
        Ok(self.mul_scalar(s, S::one() / S::cast(count as f64)))
    }

    /// Reduces everything to a rank-0 scalar.
    pub fn sum_all(&mut self, x: TensorId) -> Result<TensorId> {
        let axes: Vec<usize> = (0..self.nodes[x.0].shape.len()).collect();
        self.sum_axes(x, &axes, false)
    }

    pub fn mean_all(&mut self, x: TensorId) -> Result<TensorId> {
        let n = self.nodes[x.0].data.len();
        let s = self.sum_all(x)?;
        Ok(self.mul_scalar(s, S::one() / S::cast(n as f64)))
    }

    /// Maximum over one axis (axis removed). Ties resolve to the lowest
    /// index, so the subgradient routing is deterministic.
    pub fn max_axis(&mut self, x: TensorId, axis: usize) -> Result<TensorId> {
        let shape = self.nodes[x.0].shape.clone();
        check_axis("max_axis", &shape, axis)?;
        let (outer, l, inner) = axis_split(&shape, axis);
        if l == 0 {
            return Err(Error::invalid("max_axis", "cannot reduce an empty axis".to_string()));
        }
        let out_shape = reduced_shape(&shape, &[axis], false);
        let mut out = vec![S::zero(); outer * inner];
        let mut arg = vec![0usize; outer * inner];
        {
            let xd = &self.nodes[x.0].data;
            for o in 0..outer {
                for t in 0..inner {
                    let mut best = xd[o * l * inner + t];
                    let mut bi = o * l * inner + t;
                    for j in 1..l {
                        let src = (o * l + j) * inner + t;
                        if xd[src] > best {
                            best = xd[src];
                            bi = src;
                        }
                    }
                    out[o * inner + t] = best;
                    arg[o * inner + t] = bi;
                }
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(out_shape, out, rg, Op::MaxAxis { x, axis, arg }))
    }

    /// Softmax along `axis`; outputs sum to one along that axis.
    pub fn softmax(&mut self, x: TensorId, axis: usize) -> Result<TensorId> {
        let shape = self.nodes[x.0].shape.clone();
        check_axis("softmax", &shape, axis)?;
        let (outer, l, inner) = axis_split(&shape, axis);
        let mut out = vec![S::zero(); numel(&shape)];
        {
            let xd = &self.nodes[x.0].data;
            for o in 0..outer {
                for t in 0..inner {
                    let base = o * l * inner + t;
                    let mut m = xd[base];
                    for j in 1..l {
                        m = m.max(xd[base + j * inner]);
                    }
                    let mut z = S::zero();
                    for j in 0..l {
                        let e = (xd[base + j * inner] - m).exp();
                        out[base + j * inner] = e;
                        z = z + e;
                    }
                    for j in 0..l {
                        out[base + j * inner] = out[base + j * inner] / z;
                    }
                }
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(shape, out, rg, Op::Softmax { x, axis }))
    }

    /// `log Σ exp` along `axis` (axis removed), max-shifted for stability.
    pub fn log_sum_exp(&mut self, x: TensorId, axis: usize) -> Result<TensorId> {
        let shape = self.nodes[x.0].shape.clone();
        check_axis("log_sum_exp", &shape, axis)?;
        let (outer, l, inner) = axis_split(&shape, axis);
        if l == 0 {
            return Err(Error::invalid("log_sum_exp", "cannot reduce an empty axis".to_string()));
        }
        let out_shape = reduced_shape(&shape, &[axis], false);
        let mut out = vec![S::zero(); outer * inner];
        {
            let xd = &self.nodes[x.0].data;
            for o in 0..outer {
                for t in 0..inner {
                    let base = o * l * inner + t;
                    let mut m = xd[base];
                    for j in 1..l {
                        m = m.max(xd[base + j * inner]);
                    }
                    let v = if m == S::neg_infinity() {
                        S::neg_infinity()
                    } else {
                        let mut z = S::zero();
                        for j in 0..l {
                            z = z + (xd[base + j * inner] - m).exp();
                        }
                        m + z.ln()
                    };
                    out[o * inner + t] = v;
                }
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(out_shape, out, rg, Op::LogSumExp { x, axis }))
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: S,
    ) -> Result<TensorId> {
        let shape = self.nodes[x.0].shape.clone();
        let l = *shape.last().ok_or_else(|| Error::invalid("layer_norm", "rank 0 input".to_string()))?;
        if self.nodes[gamma.0].shape != [l] || self.nodes[beta.0].shape != [l] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: shape,
                rhs: self.nodes[gamma.0].shape.clone(),
            });
        }
        let rows = numel(&shape) / l;
        let mut out = vec![S::zero(); numel(&shape)];
        {
            let xd = &self.nodes[x.0].data;
            let gm = &self.nodes[gamma.0].data;
            let bt = &self.nodes[beta.0].data;
            let inv_l = S::one() / S::cast(l as f64);
            for r in 0..rows {
                let row = &xd[r * l..(r + 1) * l];
                let mut mu = S::zero();
                for &v in row {
                    mu = mu + v;
                }
                mu = mu * inv_l;
                let mut var = S::zero();
                for &v in row {
                    let d = v - mu;
                    var = var + d * d;
                }
                var = var * inv_l;
                let sigma = (var + eps).sqrt();
                for j in 0..l {
                    out[r * l + j] = gm[j] * ((row[j] - mu) / sigma) + bt[j];
                }
            }
        }
        let rg = self.nodes[x.0].requires_grad
            || self.nodes[gamma.0].requires_grad
            || self.nodes[beta.0].requires_grad;
        Ok(self.push(shape, out, rg, Op::LayerNorm { x, gamma, beta, eps }))
    }
}

pub(crate) fn backward<S: Scalar>(nodes: &[Node<S>], grads: &mut [Option<Vec<S>>], i: usize, g: &[S]) {
    match &nodes[i].op {
        Op::SumAxes { x, axes, .. } => {
            let shape = nodes[x.0].shape.clone();
            let bs = bucket_strides(&shape, axes);
            if let Some(gx) = grad_slot(nodes, grads, *x) {
                walk_buckets(&shape, &bs, |lin, off| gx[lin] = gx[lin] + g[off]);
            }
        }
        Op::MaxAxis { x, arg, .. } => {
            if let Some(gx) = grad_slot(nodes, grads, *x) {
                for (j, &src) in arg.iter().enumerate() {
                    gx[src] = gx[src] + g[j];
                }
            }
        }
        Op::Softmax { x, axis } => {
            let (outer, l, inner) = axis_split(&nodes[i].shape, *axis);
            let y = &nodes[i].data;
            if let Some(gx) = grad_slot(nodes, grads, *x) {
                for o in 0..outer {
                    for t in 0..inner {
                        let base = o * l * inner + t;
                        let mut dot = S::zero();
                        for j in 0..l {
                            let p = base + j * inner;
                            dot = dot + g[p] * y[p];
                        }
                        for j in 0..l {
                            let p = base + j * inner;
                            gx[p] = gx[p] + y[p] * (g[p] - dot);
                        }
                    }
                }
            }
        }
        Op::LogSumExp { x, axis } => {
            let (outer, l, inner) = axis_split(&nodes[x.0].shape, *axis);
            let xd = &nodes[x.0].data;
            let y = &nodes[i].data;
            if let Some(gx) = grad_slot(nodes, grads, *x) {
                for o in 0..outer {
                    for t in 0..inner {
                        let base = o * l * inner + t;
                        let lse = y[o * inner + t];
                        let gv = g[o * inner + t];
                        for j in 0..l {
                            let p = base + j * inner;
                            gx[p] = gx[p] + gv * (xd[p] - lse).exp();
                        }
                    }
                }
            }
        }
        Op::LayerNorm { x, gamma, beta, eps } => {
            let shape = &nodes[i].shape;
            let l = *shape.last().unwrap();
            let rows = numel(shape) / l;
            let xd = &nodes[x.0].data;
            let gm = &nodes[gamma.0].data;
            let inv_l = S::one() / S::cast(l as f64);
            // Per-row statistics are recomputed; storing them would bloat
            // every node for one op.
            let mut stats = vec![(S::zero(), S::zero()); rows];
            for r in 0..rows {
                let row = &xd[r * l..(r + 1) * l];
                let mut mu = S::zero();
                for &v in row {
                    mu = mu + v;
                }
                mu = mu * inv_l;
                let mut var = S::zero();
                for &v in row {
                    let d = v - mu;
                    var = var + d * d;
                }
                stats[r] = (mu, (var * inv_l + *eps).sqrt());
            }
            if let Some(gx) = grad_slot(nodes, grads, *x) {
                for r in 0..rows {
                    let (mu, sigma) = stats[r];
                    let row = &xd[r * l..(r + 1) * l];
                    let gr = &g[r * l..(r + 1) * l];
                    let mut mean_h = S::zero();
                    let mut mean_hy = S::zero();
                    for j in 0..l {
                        let h = gr[j] * gm[j];
                        let y = (row[j] - mu) / sigma;
                        mean_h = mean_h + h;
                        mean_hy = mean_hy + h * y;
                    }
                    mean_h = mean_h * inv_l;
                    mean_hy = mean_hy * inv_l;
                    for j in 0..l {
                        let h = gr[j] * gm[j];
                        let y = (row[j] - mu) / sigma;
                        gx[r * l + j] = gx[r * l + j] + (h - mean_h - y * mean_hy) / sigma;
                    }
                }
            }
            if let Some(gg) = grad_slot(nodes, grads, *gamma) {
                for r in 0..rows {
                    let (mu, sigma) = stats[r];
                    for j in 0..l {
                        let y = (xd[r * l + j] - mu) / sigma;
                        gg[j] = gg[j] + g[r * l + j] * y;
                    }
                }
            }
            if let Some(gb) = grad_slot(nodes, grads, *beta) {
                for r in 0..rows {
                    for j in 0..l {
                        gb[j] = gb[j] + g[r * l + j];
                    }
                }
            }
        }
        _ => unreachable!("reduce backward on foreign op"),
    }
}
