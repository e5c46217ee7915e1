//! Differentiable bilinear grid sampling with zero padding.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{grad_slot, Node, Op, Tape, TensorId};

/// Pixel-space coordinate for a normalized one: grid cells are centered,
/// so ±1 maps to the outer pixel edges.
fn to_pixel<S: Scalar>(v: S, extent: usize) -> S {
    (v + S::one()) * S::cast(0.5) * S::cast(extent as f64) - S::cast(0.5)
}

impl<S: Scalar> Tape<S> {
    /// Samples `input` at `grid` locations with bilinear weights.
    ///
    /// `input` is `[h, w, c]` (shared across the batch) or `[b, h, w, c]`;
    /// `grid` is `[b, oh, ow, 2]` holding normalized `(x, y)` in `[-1, 1]`.
    /// Samples outside the input are zero in all channels.
    pub fn grid_sample(&mut self, input: TensorId, grid: TensorId) -> Result<TensorId> {
        let ish = self.nodes[input.0].shape.clone();
        let gsh = self.nodes[grid.0].shape.clone();
        if gsh.len() != 4 || gsh[3] != 2 {
            return Err(Error::invalid("grid_sample", format!("grid must be [b,oh,ow,2], got {gsh:?}")));
        }
        let (batched, h, w, c) = match ish.len() {
            3 => (false, ish[0], ish[1], ish[2]),
            4 => (true, ish[1], ish[2], ish[3]),
            _ => return Err(Error::invalid("grid_sample", format!("input must be rank 3 or 4, got {ish:?}"))),
        };
        let b = gsh[0];
        if batched && ish[0] != b {
            return Err(Error::ShapeMismatch { op: "grid_sample", lhs: ish, rhs: gsh });
        }
        let (oh, ow) = (gsh[1], gsh[2]);
        let in_stride = if batched { h * w * c } else { 0 };
        let mut out = vec![S::zero(); b * oh * ow * c];
        {
            let x = &self.nodes[input.0].data;
            let gr = &self.nodes[grid.0].data;
            for bi in 0..b {
                let ibase = bi * in_stride;
                for p in 0..oh * ow {
                    let gidx = (bi * oh * ow + p) * 2;
                    let px = to_pixel(gr[gidx], w);
                    let py = to_pixel(gr[gidx + 1], h);
                    let x0 = px.floor();
                    let y0 = py.floor();
                    let fx = px - x0;
                    let fy = py - y0;
                    let (x0, y0) = (x0.as_f64() as isize, y0.as_f64() as isize);
                    let dst = (bi * oh * ow + p) * c;
                    for (dx, dy, wgt) in [
                        (0, 0, (S::one() - fx) * (S::one() - fy)),
                        (1, 0, fx * (S::one() - fy)),
                        (0, 1, (S::one() - fx) * fy),
                        (1, 1, fx * fy),
                    ] {
                        let (cx, cy) = (x0 + dx, y0 + dy);
                        if cx < 0 || cy < 0 || cx >= w as isize || cy >= h as isize {
                            continue;
                        }
                        let src = ibase + (cy as usize * w + cx as usize) * c;
                        for ch in 0..c {
                            out[dst + ch] = out[dst + ch] + wgt * x[src + ch];
                        }
                    }
                }
            }
        }
        let rg = self.nodes[input.0].requires_grad || self.nodes[grid.0].requires_grad;
        Ok(self.push(vec![b, oh, ow, c], out, rg, Op::GridSample { input, grid }))
    }
}

pub(crate) fn backward<S: Scalar>(nodes: &[Node<S>], grads: &mut [Option<Vec<S>>], i: usize, g: &[S]) {
    let Op::GridSample { input, grid } = nodes[i].op else { unreachable!() };
    let ish = &nodes[input.0].shape;
    let gsh = &nodes[grid.0].shape;
    let batched = ish.len() == 4;
    let (h, w, c) = if batched { (ish[1], ish[2], ish[3]) } else { (ish[0], ish[1], ish[2]) };
    let (b, oh, ow) = (gsh[0], gsh[1], gsh[2]);
    let in_stride = if batched { h * w * c } else { 0 };
    let x = &nodes[input.0].data;
    let gr = &nodes[grid.0].data;
    let half_w = S::cast(0.5) * S::cast(w as f64);
    let half_h = S::cast(0.5) * S::cast(h as f64);

    // Both passes share the corner geometry; capturing it in a closure per
    // sample keeps the two gradient targets independent.
    let corner = |bi: usize, p: usize| {
        let gidx = (bi * oh * ow + p) * 2;
        let px = to_pixel(gr[gidx], w);
        let py = to_pixel(gr[gidx + 1], h);
        let x0 = px.floor();
        let y0 = py.floor();
        (x0.as_f64() as isize, y0.as_f64() as isize, px - x0, py - y0)
    };
    let fetch = |ibase: usize, cx: isize, cy: isize, ch: usize| -> S {
        if cx < 0 || cy < 0 || cx >= w as isize || cy >= h as isize {
            S::zero()
        } else {
            x[ibase + (cy as usize * w + cx as usize) * c + ch]
        }
    };

    if let Some(gx) = grad_slot(nodes, grads, input) {
        for bi in 0..b {
            let ibase = bi * in_stride;
            for p in 0..oh * ow {
                let (x0, y0, fx, fy) = corner(bi, p);
                let src_g = (bi * oh * ow + p) * c;
                for (dx, dy, wgt) in [
                    (0, 0, (S::one() - fx) * (S::one() - fy)),
                    (1, 0, fx * (S::one() - fy)),
                    (0, 1, (S::one() - fx) * fy),
                    (1, 1, fx * fy),
                ] {
                    let (cx, cy) = (x0 + dx, y0 + dy);
                    if cx < 0 || cy < 0 || cx >= w as isize || cy >= h as isize {
                        continue;
                    }
                    let dst = ibase + (cy as usize * w + cx as usize) * c;
                    for ch in 0..c {
                        gx[dst + ch] = gx[dst + ch] + wgt * g[src_g + ch];
                    }
                }
            }
        }
    }

    if let Some(gg) = grad_slot(nodes, grads, grid) {
        for bi in 0..b {
            let ibase = bi * in_stride;
            for p in 0..oh * ow {
                let (x0, y0, fx, fy) = corner(bi, p);
                let src_g = (bi * oh * ow + p) * c;
                let mut dpx = S::zero();
                let mut dpy = S::zero();
                for ch in 0..c {
                    let v00 = fetch(ibase, x0, y0, ch);
                    let v10 = fetch(ibase, x0 + 1, y0, ch);
                    let v01 = fetch(ibase, x0, y0 + 1, ch);
                    let v11 = fetch(ibase, x0 + 1, y0 + 1, ch);
                    let gv = g[src_g + ch];
                    dpx = dpx + gv * ((S::one() - fy) * (v10 - v00) + fy * (v11 - v01));
                    dpy = dpy + gv * ((S::one() - fx) * (v01 - v00) + fx * (v11 - v10));
                }
                let gidx = (bi * oh * ow + p) * 2;
                gg[gidx] = gg[gidx] + dpx * half_w;
                gg[gidx + 1] = gg[gidx + 1] + dpy * half_h;
            }
        }
    }
}
