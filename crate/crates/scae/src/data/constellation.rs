//! Online constellation generation: up to three shapes (two squares and a
//! triangle), each included with probability 0.5 and pushed through an
//! independent random similarity transform, then normalized so every present
//! point lies in [-1, 1]².

use rand::Rng;
use scae_core::geometry::AffineMatrix;
use serde::{Deserialize, Serialize};

use crate::{Rng as ChaRng, Tape, TensorId};

/// Point slots per example: 4 + 4 + 3.
pub const MAX_POINTS: usize = 11;
pub const NUM_SHAPES: usize = 3;

#[derive(Debug, Clone)]
pub struct ConstellationSpec {
    /// Canonical point lists per shape.
    pub shapes: Vec<Vec<[f64; 2]>>,
    pub include_prob: f64,
    /// Rotation drawn uniformly in ±max_rotation (radians).
    pub max_rotation: f64,
    pub scale_range: (f64, f64),
    /// Shift drawn uniformly in ±shift_range per axis, pre-normalization.
    pub shift_range: f64,
}

impl Default for ConstellationSpec {
    fn default() -> Self {
        let square = vec![[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]];
        // Equilateral triangle with unit circumradius.
        let third = 2.0 * std::f64::consts::PI / 3.0;
        let triangle: Vec<[f64; 2]> = (0..3)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 + i as f64 * third;
                [a.cos(), a.sin()]
            })
            .collect();
        ConstellationSpec {
            shapes: vec![square.clone(), square, triangle],
            include_prob: 0.5,
            max_rotation: std::f64::consts::PI,
            scale_range: (0.5, 2.0),
            shift_range: 1.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointSet {
    /// `MAX_POINTS` slots; absent slots hold (0, 0).
    pub points: Vec<[f64; 2]>,
    pub present: Vec<bool>,
    /// Constellation index per slot.
    pub labels: Vec<usize>,
}

impl PointSet {
    pub fn num_present(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }
}

/// Draws `count` examples. Examples where every constellation came out
/// absent are regenerated, so each example has at least one shape.
pub fn generate_constellations<R: Rng>(
    rng: &mut R,
    spec: &ConstellationSpec,
    count: usize,
) -> Vec<PointSet> {
    (0..count).map(|_| generate_one(rng, spec)).collect()
}

fn generate_one<R: Rng>(rng: &mut R, spec: &ConstellationSpec) -> PointSet {
    loop {
        let mut points = Vec::with_capacity(MAX_POINTS);
        let mut present = Vec::with_capacity(MAX_POINTS);
        let mut labels = Vec::with_capacity(MAX_POINTS);
        let mut any = false;
        for (ci, shape) in spec.shapes.iter().enumerate() {
            let include = rng.gen_range(0.0..1.0) < spec.include_prob;
            if include {
                any = true;
                let theta = rng.gen_range(-spec.max_rotation..spec.max_rotation);
                let scale = rng.gen_range(spec.scale_range.0..spec.scale_range.1);
                let tx = rng.gen_range(-spec.shift_range..spec.shift_range);
                let ty = rng.gen_range(-spec.shift_range..spec.shift_range);
                let m = AffineMatrix::similarity(theta, scale, tx, ty);
                for &[x, y] in shape {
                    let (px, py) = m.apply(x, y);
                    points.push([px, py]);
                    present.push(true);
                    labels.push(ci);
                }
            } else {
                for _ in shape {
                    points.push([0.0, 0.0]);
                    present.push(false);
                    labels.push(ci);
                }
            }
        }
        if !any {
            continue;
        }
        let mut ps = PointSet { points, present, labels };
        normalize_points(&mut ps);
        return ps;
    }
}

/// Maps the bounding box of present points into [-1, 1]², preserving aspect
/// ratio (the longer side spans the full interval). Already-normalized sets
/// pass through unchanged, so normalization is idempotent.
pub fn normalize_points(ps: &mut PointSet) {
    let present: Vec<&[f64; 2]> =
        ps.points.iter().zip(&ps.present).filter(|(_, &p)| p).map(|(pt, _)| pt).collect();
    if present.is_empty() {
        return;
    }
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &present {
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    let cx = (min_x + max_x) / 2.0;
    let cy = (min_y + max_y) / 2.0;
    let half = ((max_x - min_x) / 2.0).max((max_y - min_y) / 2.0);
    if half < 1e-12 {
        return;
    }
    // Already normalized up to fp noise: pass through bit-identically.
    if cx.abs() < 1e-12 && cy.abs() < 1e-12 && (half - 1.0).abs() < 1e-12 {
        return;
    }
    let s = 1.0 / half;
    for (pt, &pres) in ps.points.iter_mut().zip(&ps.present) {
        if pres {
            pt[0] = (pt[0] - cx) * s;
            pt[1] = (pt[1] - cy) * s;
        }
    }
}

/// Packs a batch of point sets into `(points [B, M, 2], mask [B, M])`
/// tensors, recorded as constants.
pub fn points_to_tensors(t: &mut Tape, batch: &[PointSet]) -> crate::Result<(TensorId, TensorId)> {
    let b = batch.len();
    let mut pts = Vec::with_capacity(b * MAX_POINTS * 2);
    let mut mask = Vec::with_capacity(b * MAX_POINTS);
    for ps in batch {
        for (p, &pres) in ps.points.iter().zip(&ps.present) {
            pts.extend([p[0], p[1]]);
            mask.push(if pres { 1.0 } else { 0.0 });
        }
    }
    let points = t.constant(&[b, MAX_POINTS, 2], pts)?;
    let mask = t.constant(&[b, MAX_POINTS], mask)?;
    Ok((points, mask))
}

/// Deterministic generator stream for a seed.
pub fn seeded_rng(seed: u64) -> ChaRng {
    use rand::SeedableRng;
    ChaRng::seed_from_u64(seed)
}
