//! Pose parameterization, 3×3 homogeneous transforms, and differentiable
//! affine template warping.
//!
//! Conventions: both image and template live in normalized coordinates
//! `[-1, 1]²` with y pointing down. A pose maps the template frame into the
//! image frame; warping inverts it. Scales are stored as logs so that any
//! finite pose yields an invertible matrix.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, TensorId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformMode {
    Affine,
    /// Forces `sy = sx` and zero shear.
    Similarity,
}

/// Six-parameter 2-D transform: log-scales, rotation, shear, translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<S> {
    pub sx: S,
    pub sy: S,
    pub theta: S,
    pub shear: S,
    pub tx: S,
    pub ty: S,
}

impl<S: Scalar> Pose<S> {
    pub fn identity() -> Self {
        Pose { sx: S::zero(), sy: S::zero(), theta: S::zero(), shear: S::zero(), tx: S::zero(), ty: S::zero() }
    }

    pub fn to_array(self) -> [S; 6] {
        [self.sx, self.sy, self.theta, self.shear, self.tx, self.ty]
    }
}

/// Row-major 3×3 matrix whose last row is exactly `[0, 0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMatrix<S>(pub [S; 9]);

impl<S: Scalar> AffineMatrix<S> {
    pub fn identity() -> Self {
        let (o, z) = (S::one(), S::zero());
        AffineMatrix([o, z, z, z, o, z, z, z, o])
    }

    pub fn translation(tx: S, ty: S) -> Self {
        let mut m = Self::identity();
        m.0[2] = tx;
        m.0[5] = ty;
        m
    }

    /// Rotation by `theta` then uniform scale then translation.
    pub fn similarity(theta: S, scale: S, tx: S, ty: S) -> Self {
        let (c, s) = (theta.cos() * scale, theta.sin() * scale);
        AffineMatrix([c, -s, tx, s, c, ty, S::zero(), S::zero(), S::one()])
    }

    pub fn compose(&self, other: &Self) -> Self {
        let a = &self.0;
        let b = &other.0;
        let mut out = [S::zero(); 9];
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = S::zero();
                for k in 0..3 {
                    acc = acc + a[i * 3 + k] * b[k * 3 + j];
                }
                out[i * 3 + j] = acc;
            }
        }
        AffineMatrix(out)
    }

    pub fn apply(&self, x: S, y: S) -> (S, S) {
        let m = &self.0;
        (m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5])
    }

    pub fn det2(&self) -> S {
        self.0[0] * self.0[4] - self.0[1] * self.0[3]
    }

    pub fn invert(&self) -> Result<Self> {
        let det = self.det2();
        if det.abs().as_f64() < 1e-12 {
            return Err(Error::DegenerateTransform(det.abs().as_f64()));
        }
        let m = &self.0;
        let (ia, ib, ic, id) = (m[4] / det, -m[1] / det, -m[3] / det, m[0] / det);
        let itx = -(ia * m[2] + ib * m[5]);
        let ity = -(ic * m[2] + id * m[5]);
        Ok(AffineMatrix([ia, ib, itx, ic, id, ity, S::zero(), S::zero(), S::one()]))
    }
}

/// Matrix form of a pose:
///
/// ```text
/// [ e^sx·cosθ   -e^sy·(sinθ + shear·cosθ)   tx ]
/// [ e^sx·sinθ    e^sy·(cosθ - shear·sinθ)   ty ]
/// [ 0            0                           1 ]
/// ```
pub fn pose_to_matrix<S: Scalar>(p: &Pose<S>, mode: TransformMode) -> AffineMatrix<S> {
    let (sy, shear) = match mode {
        TransformMode::Affine => (p.sy, p.shear),
        TransformMode::Similarity => (p.sx, S::zero()),
    };
    let (esx, esy) = (p.sx.exp(), sy.exp());
    let (c, s) = (p.theta.cos(), p.theta.sin());
    AffineMatrix([
        esx * c,
        -esy * (s + shear * c),
        p.tx,
        esx * s,
        esy * (c - shear * s),
        p.ty,
        S::zero(),
        S::zero(),
        S::one(),
    ])
}

/// Exact inverse of [`pose_to_matrix`] on matrices it produced.
pub fn matrix_to_pose<S: Scalar>(m: &AffineMatrix<S>) -> Pose<S> {
    let e = &m.0;
    let (a, b, tx, c, d, ty) = (e[0], e[1], e[2], e[3], e[4], e[5]);
    let theta = c.atan2(a);
    let sx = (a * a + c * c).ln() * S::cast(0.5);
    let (u, v) = (-b, d);
    let esy = u * theta.sin() + v * theta.cos();
    let sy = esy.ln();
    let shear = (u * theta.cos() - v * theta.sin()) / esy;
    Pose { sx, sy, theta, shear, tx, ty }
}

// ── Tape-side counterparts ───────────────────────────────────────────

/// Splits the last axis of `[..., 6]` into six `[..., 1]` views.
fn pose_parts<S: Scalar>(t: &mut Tape<S>, pose: TensorId) -> Result<[TensorId; 6]> {
    let rank = t.shape(pose).len();
    if rank == 0 || t.shape(pose)[rank - 1] != 6 {
        return Err(Error::invalid("pose_to_matrix", format!("expected [..., 6], got {:?}", t.shape(pose))));
    }
    let axis = rank - 1;
    let mut out = [pose; 6];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = t.narrow(pose, axis, i, 1)?;
    }
    Ok(out)
}

/// Differentiable pose → 3×3 matrix; input `[..., 6]`, output `[..., 3, 3]`.
pub fn pose_to_matrix_t<S: Scalar>(
    t: &mut Tape<S>,
    pose: TensorId,
    mode: TransformMode,
) -> Result<TensorId> {
    let [sx, sy, th, sh, tx, ty] = pose_parts(t, pose)?;
    let (sy, sh) = match mode {
        TransformMode::Affine => (sy, Some(sh)),
        TransformMode::Similarity => (sx, None),
    };
    let esx = t.exp(sx);
    let esy = t.exp(sy);
    let cos = t.cos(th);
    let sin = t.sin(th);
    let a = t.mul(esx, cos)?;
    let c = t.mul(esx, sin)?;
    let (b, d) = match sh {
        Some(sh) => {
            let shc = t.mul(sh, cos)?;
            let shs = t.mul(sh, sin)?;
            let sb = t.add(sin, shc)?;
            let sd = t.sub(cos, shs)?;
            let nb = t.mul(esy, sb)?;
            (t.neg(nb), t.mul(esy, sd)?)
        }
        None => {
            let nb = t.mul(esy, sin)?;
            (t.neg(nb), t.mul(esy, cos)?)
        }
    };
    let zero = t.mul_scalar(tx, S::zero());
    let one = t.add_scalar(zero, S::one());
    let flat = t.concat(&[a, b, tx, c, d, ty, zero, zero, one], t.shape(a).len() - 1)?;
    let mut shape = t.shape(flat).to_vec();
    shape.pop();
    shape.extend([3, 3]);
    t.reshape(flat, &shape)
}

/// Differentiable matrix → pose; exact on matrices built by
/// [`pose_to_matrix_t`]. Guards (`+1e-12` under the log, scale floor `1e-9`)
/// only bite on degenerate inputs that the pose parameterization cannot
/// produce.
pub fn matrix_to_pose_t<S: Scalar>(t: &mut Tape<S>, m: TensorId) -> Result<TensorId> {
    let shape = t.shape(m).to_vec();
    let rank = shape.len();
    if rank < 2 || shape[rank - 2..] != [3, 3] {
        return Err(Error::invalid("matrix_to_pose", format!("expected [..., 3, 3], got {shape:?}")));
    }
    let mut flat_shape = shape[..rank - 2].to_vec();
    flat_shape.push(9);
    let flat = t.reshape(m, &flat_shape)?;
    let axis = flat_shape.len() - 1;
    let get = |t: &mut Tape<S>, i: usize| t.narrow(flat, axis, i, 1);
    let a = get(t, 0)?;
    let b = get(t, 1)?;
    let tx = get(t, 2)?;
    let c = get(t, 3)?;
    let d = get(t, 4)?;
    let ty = get(t, 5)?;

    let theta = t.atan2(c, a)?;
    let a2 = t.mul(a, a)?;
    let c2 = t.mul(c, c)?;
    let n2 = t.add(a2, c2)?;
    let n2 = t.add_scalar(n2, S::cast(1e-12));
    let logn2 = t.log(n2);
    let sx = t.mul_scalar(logn2, S::cast(0.5));

    let u = t.neg(b);
    let sin = t.sin(theta);
    let cos = t.cos(theta);
    let us = t.mul(u, sin)?;
    let vc = t.mul(d, cos)?;
    let esy_raw = t.add(us, vc)?;
    let esy = t.clamp_min(esy_raw, S::cast(1e-9));
    let sy = t.log(esy);
    let uc = t.mul(u, cos)?;
    let vs = t.mul(d, sin)?;
    let num = t.sub(uc, vs)?;
    let shear = t.div(num, esy)?;

    t.concat(&[sx, sy, theta, shear, tx, ty], axis)
}

/// Analytic inverse of a batch of pose matrices; errors if any determinant
/// magnitude falls below `1e-12`.
pub fn invert_affine_t<S: Scalar>(t: &mut Tape<S>, m: TensorId) -> Result<TensorId> {
    let shape = t.shape(m).to_vec();
    let rank = shape.len();
    if rank < 2 || shape[rank - 2..] != [3, 3] {
        return Err(Error::invalid("invert_affine", format!("expected [..., 3, 3], got {shape:?}")));
    }
    let mut flat_shape = shape[..rank - 2].to_vec();
    flat_shape.push(9);
    let flat = t.reshape(m, &flat_shape)?;
    let axis = flat_shape.len() - 1;
    let get = |t: &mut Tape<S>, i: usize| t.narrow(flat, axis, i, 1);
    let a = get(t, 0)?;
    let b = get(t, 1)?;
    let tx = get(t, 2)?;
    let c = get(t, 3)?;
    let d = get(t, 4)?;
    let ty = get(t, 5)?;

    let ad = t.mul(a, d)?;
    let bc = t.mul(b, c)?;
    let det = t.sub(ad, bc)?;
    let min_det = t.value(det).iter().fold(f64::INFINITY, |m, v| m.min(v.abs().as_f64()));
    if min_det < 1e-12 {
        return Err(Error::DegenerateTransform(min_det));
    }
    let ia = t.div(d, det)?;
    let nb = t.neg(b);
    let ib = t.div(nb, det)?;
    let nc = t.neg(c);
    let ic = t.div(nc, det)?;
    let id = t.div(a, det)?;
    let iat = t.mul(ia, tx)?;
    let ibt = t.mul(ib, ty)?;
    let s1 = t.add(iat, ibt)?;
    let itx = t.neg(s1);
    let ict = t.mul(ic, tx)?;
    let idt = t.mul(id, ty)?;
    let s2 = t.add(ict, idt)?;
    let ity = t.neg(s2);
    let zero = t.mul_scalar(tx, S::zero());
    let one = t.add_scalar(zero, S::one());
    let flat_inv = t.concat(&[ia, ib, itx, ic, id, ity, zero, zero, one], axis)?;
    t.reshape(flat_inv, &shape)
}

/// Homogeneous action of `[..., 3, 3]` matrices on `[..., n, 2]` points.
pub fn apply_affine_points<S: Scalar>(
    t: &mut Tape<S>,
    m: TensorId,
    points: TensorId,
) -> Result<TensorId> {
    let psh = t.shape(points).to_vec();
    let rank = psh.len();
    if rank < 2 || psh[rank - 1] != 2 {
        return Err(Error::invalid("apply_affine_points", format!("expected [..., n, 2], got {psh:?}")));
    }
    let ones = {
        let mut sh = psh.clone();
        sh[rank - 1] = 1;
        t.full(&sh, S::one())
    };
    let homog = t.concat(&[points, ones], rank - 1)?;
    let mt = t.transpose_last(m)?;
    let moved = t.matmul(homog, mt)?;
    t.narrow(moved, rank - 1, 0, 2)
}

/// Normalized pixel-center coordinates (x, y, 1) for an `oh × ow` canvas.
fn base_grid<S: Scalar>(oh: usize, ow: usize) -> Vec<S> {
    let mut g = Vec::with_capacity(oh * ow * 3);
    for i in 0..oh {
        let y = S::cast((2.0 * (i as f64 + 0.5)) / oh as f64 - 1.0);
        for j in 0..ow {
            let x = S::cast((2.0 * (j as f64 + 0.5)) / ow as f64 - 1.0);
            g.extend([x, y, S::one()]);
        }
    }
    g
}

/// Inverse-warps `template [ht, wt, c]` onto a `out_h × out_w` canvas under
/// each pose in `poses [b, 6]`. Fully differentiable in both the template
/// and the poses; samples beyond the template are zero (transparent).
pub fn warp_template<S: Scalar>(
    t: &mut Tape<S>,
    template: TensorId,
    poses: TensorId,
    mode: TransformMode,
    out_h: usize,
    out_w: usize,
) -> Result<TensorId> {
    let psh = t.shape(poses).to_vec();
    if psh.len() != 2 || psh[1] != 6 {
        return Err(Error::invalid("warp_template", format!("poses must be [b, 6], got {psh:?}")));
    }
    let b = psh[0];
    let m = pose_to_matrix_t(t, poses, mode)?;
    let minv = invert_affine_t(t, m)?;
    let minv_t = t.transpose_last(minv)?;
    let base = t.constant(&[out_h * out_w, 3], base_grid(out_h, out_w))?;
    let coords = t.matmul(base, minv_t)?;
    let xy = t.narrow(coords, 2, 0, 2)?;
    let grid = t.reshape(xy, &[b, out_h, out_w, 2])?;
    t.grid_sample(template, grid)
}
