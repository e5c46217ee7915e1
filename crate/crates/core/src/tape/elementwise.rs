//! Elementwise primitives with NumPy-style broadcasting.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::shape::{broadcast_shapes, broadcast_strides, for_each_broadcast2, numel};
use crate::tape::{grad_slot, Node, Op, Tape, TensorId};

impl<S: Scalar> Tape<S> {
    fn binary(
        &mut self,
        op_name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<TensorId> {
        let (ash, bsh) = (self.nodes[a.0].shape.clone(), self.nodes[b.0].shape.clone());
        let out_shape = broadcast_shapes(op_name, &ash, &bsh)?;
        let n = numel(&out_shape);
        let mut out = vec![S::zero(); n];
        if ash == bsh {
            let (da, db) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
            for i in 0..n {
                out[i] = f(da[i], db[i]);
            }
        } else {
            let sa = broadcast_strides(&ash, &out_shape);
            let sb = broadcast_strides(&bsh, &out_shape);
            let (da, db) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
            for_each_broadcast2(&out_shape, &sa, &sb, |lin, oa, ob| out[lin] = f(da[oa], db[ob]));
        }
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        Ok(self.push(out_shape, out, rg, op))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Four-quadrant arctangent `atan2(y, x)`, elementwise.
    pub fn atan2(&mut self, y: TensorId, x: TensorId) -> Result<TensorId> {
        self.binary("atan2", y, x, |a, b| a.atan2(b), Op::Atan2(y, x))
    }

    fn unary(&mut self, x: TensorId, f: impl Fn(S) -> S, op: Op<S>) -> TensorId {
        let xd = &self.nodes[x.0].data;
        let out: Vec<S> = xd.iter().map(|&v| f(v)).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.nodes[x.0].requires_grad;
        self.push(shape, out, rg, op)
    }

    pub fn neg(&mut self, x: TensorId) -> TensorId {
        self.unary(x, |v| -v, Op::Neg(x))
    }

    pub fn exp(&mut self, x: TensorId) -> TensorId {
        self.unary(x, |v| v.exp(), Op::Exp(x))
    }

    pub fn log(&mut self, x: TensorId) -> TensorId {
        self.unary(x, |v| v.ln(), Op::Log(x))
    }

    pub fn sqrt(&mut self, x: TensorId) -> TensorId {
        self.unary(x, |v| v.sqrt(), Op::Sqrt(x))
    }

    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        self.unary(x, sigmoid_val, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: TensorId) -> TensorId {
        self.unary(x, |v| if v > S::zero() { v } else { S::zero() }, Op::Relu(x))
    }

    /// Numerically stable `log(1 + e^x)`.
    pub fn softplus(&mut self, x: TensorId) -> TensorId {
        self.unary(x, softplus_val, Op::Softplus(x))
    }

    pub fn sin(&mut self, x: TensorId) -> TensorId {
        self.unary(x, |v| v.sin(), Op::Sin(x))
    }

    pub fn cos(&mut self, x: TensorId) -> TensorId {
        self.unary(x, |v| v.cos(), Op::Cos(x))
    }

    pub fn abs(&mut self, x: TensorId) -> TensorId {
        self.unary(x, |v| v.abs(), Op::Abs(x))
    }

    pub fn add_scalar(&mut self, x: TensorId, c: S) -> TensorId {
        self.unary(x, |v| v + c, Op::AddScalar { x })
    }

    pub fn mul_scalar(&mut self, x: TensorId, c: S) -> TensorId {
        self.unary(x, |v| v * c, Op::MulScalar { x, c })
    }

    /// `max(x, c)`; gradient passes only where `x > c`.
    pub fn clamp_min(&mut self, x: TensorId, c: S) -> TensorId {
        self.unary(x, |v| if v > c { v } else { c }, Op::ClampMin { x, c })
    }

    /// Identity forward, zero backward: the output does not require grad,
    /// so no gradient flows into anything behind it.
    pub fn stop_grad(&mut self, x: TensorId) -> TensorId {
        let shape = self.nodes[x.0].shape.clone();
        let data = std::sync::Arc::clone(&self.nodes[x.0].data);
        self.push_shared(shape, data, false, Op::StopGrad(x))
    }

    /// `log(sigmoid(x))` computed as `-softplus(-x)`.
    pub fn log_sigmoid(&mut self, x: TensorId) -> TensorId {
        let n = self.neg(x);
        let sp = self.softplus(n);
        self.neg(sp)
    }

    pub fn square(&mut self, x: TensorId) -> Result<TensorId> {
        self.mul(x, x)
    }
}

pub(crate) fn sigmoid_val<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

pub(crate) fn softplus_val<S: Scalar>(v: S) -> S {
    v.max(S::zero()) + (-(v.abs())).exp().ln_1p()
}

/// Accumulates `d/d parent` for both operands of a broadcast binary op.
pub(crate) fn backward_binary<S: Scalar>(
    nodes: &[Node<S>],
    grads: &mut [Option<Vec<S>>],
    i: usize,
    a: TensorId,
    b: TensorId,
    g: &[S],
) {
    let out_shape = &nodes[i].shape;
    let sa = broadcast_strides(&nodes[a.0].shape, out_shape);
    let sb = broadcast_strides(&nodes[b.0].shape, out_shape);
    let da = &nodes[a.0].data;
    let db = &nodes[b.0].data;
    // One pass per operand: the walk pattern is identical, only the local
    // derivative changes.
    match &nodes[i].op {
        Op::Add(..) => {
            if let Some(ga) = grad_slot(nodes, grads, a) {
                for_each_broadcast2(out_shape, &sa, &sb, |lin, oa, _| ga[oa] = ga[oa] + g[lin]);
            }
            if let Some(gb) = grad_slot(nodes, grads, b) {
                for_each_broadcast2(out_shape, &sa, &sb, |lin, _, ob| gb[ob] = gb[ob] + g[lin]);
            }
        }
        Op::Sub(..) => {
            if let Some(ga) = grad_slot(nodes, grads, a) {
                for_each_broadcast2(out_shape, &sa, &sb, |lin, oa, _| ga[oa] = ga[oa] + g[lin]);
            }
            if let Some(gb) = grad_slot(nodes, grads, b) {
                for_each_broadcast2(out_shape, &sa, &sb, |lin, _, ob| gb[ob] = gb[ob] - g[lin]);
            }
        }
        Op::Mul(..) => {
            if let Some(ga) = grad_slot(nodes, grads, a) {
                for_each_broadcast2(out_shape, &sa, &sb, |lin, oa, ob| {
                    ga[oa] = ga[oa] + g[lin] * db[ob];
                });
            }
            if let Some(gb) = grad_slot(nodes, grads, b) {
                for_each_broadcast2(out_shape, &sa, &sb, |lin, oa, ob| {
                    gb[ob] = gb[ob] + g[lin] * da[oa];
                });
            }
        }
        Op::Div(..) => {
            if let Some(ga) = grad_slot(nodes, grads, a) {
                for_each_broadcast2(out_shape, &sa, &sb, |lin, oa, ob| {
                    ga[oa] = ga[oa] + g[lin] / db[ob];
                });
            }
            if let Some(gb) = grad_slot(nodes, grads, b) {
                for_each_broadcast2(out_shape, &sa, &sb, |lin, oa, ob| {
                    let d = db[ob];
                    gb[ob] = gb[ob] - g[lin] * da[oa] / (d * d);
                });
            }
        }
        Op::Atan2(..) => {
            // z = atan2(y, x): dz/dy = x/(x²+y²), dz/dx = -y/(x²+y²).
            if let Some(ga) = grad_slot(nodes, grads, a) {
                for_each_broadcast2(out_shape, &sa, &sb, |lin, oa, ob| {
                    let (y, x) = (da[oa], db[ob]);
                    ga[oa] = ga[oa] + g[lin] * x / (x * x + y * y);
                });
            }
            if let Some(gb) = grad_slot(nodes, grads, b) {
                for_each_broadcast2(out_shape, &sa, &sb, |lin, oa, ob| {
                    let (y, x) = (da[oa], db[ob]);
                    gb[ob] = gb[ob] - g[lin] * y / (x * x + y * y);
                });
            }
        }
        _ => unreachable!("backward_binary on a non-binary op"),
    }
}

pub(crate) fn backward_unary<S: Scalar>(
    nodes: &[Node<S>],
    grads: &mut [Option<Vec<S>>],
    i: usize,
    x: TensorId,
    g: &[S],
) {
    let Some(gx) = grad_slot(nodes, grads, x) else { return };
    let xd = &nodes[x.0].data;
    let out = &nodes[i].data;
    match &nodes[i].op {
        Op::Neg(_) => {
            for j in 0..g.len() {
                gx[j] = gx[j] - g[j];
            }
        }
        Op::Exp(_) => {
            for j in 0..g.len() {
                gx[j] = gx[j] + g[j] * out[j];
            }
        }
        Op::Log(_) => {
            for j in 0..g.len() {
                gx[j] = gx[j] + g[j] / xd[j];
            }
        }
        Op::Sqrt(_) => {
            let half = S::cast(0.5);
            for j in 0..g.len() {
                gx[j] = gx[j] + g[j] * half / out[j];
            }
        }
        Op::Sigmoid(_) => {
            for j in 0..g.len() {
                gx[j] = gx[j] + g[j] * out[j] * (S::one() - out[j]);
            }
        }
        Op::Relu(_) => {
            for j in 0..g.len() {
                if xd[j] > S::zero() {
                    gx[j] = gx[j] + g[j];
                }
            }
        }
        Op::Softplus(_) => {
            for j in 0..g.len() {
                gx[j] = gx[j] + g[j] * sigmoid_val(xd[j]);
            }
        }
        Op::Sin(_) => {
            for j in 0..g.len() {
                gx[j] = gx[j] + g[j] * xd[j].cos();
            }
        }
        Op::Cos(_) => {
            for j in 0..g.len() {
                gx[j] = gx[j] - g[j] * xd[j].sin();
            }
        }
        Op::Abs(_) => {
            for j in 0..g.len() {
                let s = if xd[j] > S::zero() {
                    S::one()
                } else if xd[j] < S::zero() {
                    -S::one()
                } else {
                    S::zero()
                };
                gx[j] = gx[j] + g[j] * s;
            }
        }
        Op::AddScalar { .. } => {
            for j in 0..g.len() {
                gx[j] = gx[j] + g[j];
            }
        }
        Op::MulScalar { c, .. } => {
            for j in 0..g.len() {
                gx[j] = gx[j] + g[j] * *c;
            }
        }
        Op::ClampMin { c, .. } => {
            for j in 0..g.len() {
                if xd[j] > *c {
                    gx[j] = gx[j] + g[j];
                }
            }
        }
        _ => unreachable!("backward_unary on a non-unary op"),
    }
}
