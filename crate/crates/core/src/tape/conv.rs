//! 2-D convolution (NHWC, 3×3-style square kernels, SAME zero padding).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{grad_slot, Node, Op, Tape, TensorId};

/// SAME padding before the first element for one spatial dimension; the
/// trailing pad follows from the output size.
fn same_pad(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

impl<S: Scalar> Tape<S> {
    /// `input [B, H, W, Cin] * weight [KH, KW, Cin, Cout]` with SAME zero
    /// padding. Output is `[B, ceil(H/s), ceil(W/s), Cout]`.
    pub fn conv2d(&mut self, input: TensorId, weight: TensorId, stride: usize) -> Result<TensorId> {
        let ish = self.nodes[input.0].shape.clone();
        let wsh = self.nodes[weight.0].shape.clone();
        if ish.len() != 4 || wsh.len() != 4 {
            return Err(Error::ShapeMismatch { op: "conv2d", lhs: ish, rhs: wsh });
        }
        if ish[3] != wsh[2] {
            return Err(Error::ShapeMismatch { op: "conv2d", lhs: ish, rhs: wsh });
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive".to_string()));
        }
        let (b, h, w, ci) = (ish[0], ish[1], ish[2], ish[3]);
        let (kh, kw, _, co) = (wsh[0], wsh[1], wsh[2], wsh[3]);
        let (oh, pt) = same_pad(h, kh, stride);
        let (ow, pl) = same_pad(w, kw, stride);
        let mut out = vec![S::zero(); b * oh * ow * co];
        {
            let x = &self.nodes[input.0].data;
            let wt = &self.nodes[weight.0].data;
            for bi in 0..b {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let dst = ((bi * oh + oy) * ow + ox) * co;
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pt as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pl as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let src = ((bi * h + iy as usize) * w + ix as usize) * ci;
                                for c in 0..ci {
                                    let v = x[src + c];
                                    let wr = ((ky * kw + kx) * ci + c) * co;
                                    for oc in 0..co {
                                        out[dst + oc] = out[dst + oc] + v * wt[wr + oc];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let rg = self.nodes[input.0].requires_grad || self.nodes[weight.0].requires_grad;
        Ok(self.push(vec![b, oh, ow, co], out, rg, Op::Conv2d { input, weight, stride, pad: (pt, pl) }))
    }
}

pub(crate) fn backward<S: Scalar>(nodes: &[Node<S>], grads: &mut [Option<Vec<S>>], i: usize, g: &[S]) {
    let Op::Conv2d { input, weight, stride, pad: (pt, pl) } = nodes[i].op else { unreachable!() };
    let ish = &nodes[input.0].shape;
    let wsh = &nodes[weight.0].shape;
    let (b, h, w, ci) = (ish[0], ish[1], ish[2], ish[3]);
    let (kh, kw, _, co) = (wsh[0], wsh[1], wsh[2], wsh[3]);
    let osh = &nodes[i].shape;
    let (oh, ow) = (osh[1], osh[2]);
    let x = &nodes[input.0].data;
    let wt = &nodes[weight.0].data;

    if let Some(gw) = grad_slot(nodes, grads, weight) {
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let go = ((bi * oh + oy) * ow + ox) * co;
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pt as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let src = ((bi * h + iy as usize) * w + ix as usize) * ci;
                            for c in 0..ci {
                                let v = x[src + c];
                                let wr = ((ky * kw + kx) * ci + c) * co;
                                for oc in 0..co {
                                    gw[wr + oc] = gw[wr + oc] + v * g[go + oc];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    if let Some(gx) = grad_slot(nodes, grads, input) {
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let go = ((bi * oh + oy) * ow + ox) * co;
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pt as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let dst = ((bi * h + iy as usize) * w + ix as usize) * ci;
                            for c in 0..ci {
                                let wr = ((ky * kw + kx) * ci + c) * co;
                                let mut acc = S::zero();
                                for oc in 0..co {
                                    acc = acc + wt[wr + oc] * g[go + oc];
                                }
                                gx[dst + c] = gx[dst + c] + acc;
                            }
                        }
                    }
                }
            }
        }
    }
}
