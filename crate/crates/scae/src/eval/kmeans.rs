//! K-means with k-means++ seeding and Lloyd iterations, deterministic given
//! a seed; several restarts keep the best objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<f64>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
}

const SHIFT_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clusters `n` points of dimension `d` (row-major in `x`) into `k` groups.
pub fn kmeans(x: &[f64], n: usize, d: usize, k: usize, seed: u64, restarts: usize) -> Result<KmeansResult> {
    if n < k || k == 0 {
        return Err(Error::Invalid(format!("kmeans needs n >= k >= 1, got n={n}, k={k}")));
    }
    assert_eq!(x.len(), n * d);
    let mut best: Option<KmeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let run = lloyd(x, n, d, k, &mut rng);
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

fn lloyd(x: &[f64], n: usize, d: usize, k: usize, rng: &mut ChaCha8Rng) -> KmeansResult {
    let mut centroids = plus_plus_init(x, n, d, k, rng);
    let mut assignments = vec![0usize; n];
    for _ in 0..MAX_ITERS {
        // Assignment step.
        for i in 0..n {
            let p = &x[i * d..(i + 1) * d];
            let mut bi = 0;
            let mut bd = f64::INFINITY;
            for c in 0..k {
                let dist = sq_dist(p, &centroids[c * d..(c + 1) * d]);
                if dist < bd {
                    bd = dist;
                    bi = c;
                }
            }
            assignments[i] = bi;
        }
        // Update step.
        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            for j in 0..d {
                sums[c * d + j] += x[i * d + j];
            }
        }
        // Empty clusters grab the point farthest from its centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&x[a * d..(a + 1) * d], &centroids[assignments[a] * d..(assignments[a] + 1) * d]);
                        let db = sq_dist(&x[b * d..(b + 1) * d], &centroids[assignments[b] * d..(assignments[b] + 1) * d]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                counts[c] = 1;
                sums[c * d..(c + 1) * d].copy_from_slice(&x[far * d..(far + 1) * d]);
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            for j in 0..d {
                let new = sums[c * d + j] / counts[c] as f64;
                shift = shift.max((new - centroids[c * d + j]).abs());
                centroids[c * d + j] = new;
            }
        }
        if shift < SHIFT_TOL {
            break;
        }
    }
    // Final assignment and objective.
    let mut inertia = 0.0;
    for i in 0..n {
        let p = &x[i * d..(i + 1) * d];
        let mut bi = 0;
        let mut bd = f64::INFINITY;
        for c in 0..k {
            let dist = sq_dist(p, &centroids[c * d..(c + 1) * d]);
            if dist < bd {
                bd = dist;
                bi = c;
            }
        }
        assignments[i] = bi;
        inertia += bd;
    }
    KmeansResult { assignments, centroids, inertia }
}

fn plus_plus_init(x: &[f64], n: usize, d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(&x[first * d..(first + 1) * d]);
    let mut dist = vec![0.0f64; n];
    for c in 1..k {
        let mut total = 0.0;
        for i in 0..n {
            let p = &x[i * d..(i + 1) * d];
            let mut best = f64::INFINITY;
            for cc in 0..c {
                best = best.min(sq_dist(p, &centroids[cc * d..(cc + 1) * d]));
            }
            dist[i] = best;
            total += best;
        }
        let pick = if total > 0.0 {
            let threshold = rng.gen_range(0.0..1.0) * total;
            let mut acc = 0.0;
            let mut sel = n - 1;
            for i in 0..n {
                acc += dist[i];
                if acc >= threshold {
                    sel = i;
                    break;
                }
            }
            sel
        } else {
            rng.gen_range(0..n)
        };
        centroids.extend_from_slice(&x[pick * d..(pick + 1) * d]);
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(k: usize, per: usize, spread: f64) -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::new();
        let mut truth = Vec::new();
        let mut s = 12345u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        for c in 0..k {
            let cx = (c % 5) as f64 * 10.0;
            let cy = (c / 5) as f64 * 10.0;
            for _ in 0..per {
                x.push(cx + next() * spread);
                x.push(cy + next() * spread);
                truth.push(c);
            }
        }
        (x, truth)
    }

    #[test]
    fn well_separated_blobs_are_recovered_exactly() {
        let (x, truth) = blobs(10, 30, 0.5);
        let res = kmeans(&x, 300, 2, 10, 7, 10).unwrap();
        // Same-cluster iff same-truth, up to relabeling.
        let mut map = vec![usize::MAX; 10];
        for (i, &c) in res.assignments.iter().enumerate() {
            if map[truth[i]] == usize::MAX {
                map[truth[i]] = c;
            }
            assert_eq!(map[truth[i]], c, "point {i} split its blob");
        }
    }

    #[test]
    fn n_equals_k_assigns_each_point_its_own_cluster() {
        let x: Vec<f64> = (0..6).flat_map(|i| [i as f64 * 5.0, 0.0]).collect();
        let res = kmeans(&x, 6, 2, 6, 3, 5).unwrap();
        let mut seen = res.assignments.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 6);
        assert!(res.inertia < 1e-18);
    }

    #[test]
    fn objective_never_increases_across_lloyd_iterations() {
        // Monitor by running with increasing iteration caps: emulate by
        // checking inertia of successive restarts of a single run is the
        // final fixed point; here we check the direct property on one run
        // by recomputing the objective after each step.
        let (x, _) = blobs(4, 25, 4.0);
        let n = 100;
        let d = 2;
        let k = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut centroids = plus_plus_init(&x, n, d, k, &mut rng);
        let objective = |cent: &Vec<f64>| -> f64 {
            (0..n)
                .map(|i| {
                    (0..k)
                        .map(|c| sq_dist(&x[i * d..(i + 1) * d], &cent[c * d..(c + 1) * d]))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum()
        };
        let mut prev = objective(&centroids);
        for _ in 0..20 {
            // One Lloyd step.
            let mut sums = vec![0.0; k * d];
            let mut counts = vec![0usize; k];
            for i in 0..n {
                let p = &x[i * d..(i + 1) * d];
                let mut bi = 0;
                let mut bd = f64::INFINITY;
                for c in 0..k {
                    let dist = sq_dist(p, &centroids[c * d..(c + 1) * d]);
                    if dist < bd {
                        bd = dist;
                        bi = c;
                    }
                }
                counts[bi] += 1;
                for j in 0..d {
                    sums[bi * d + j] += p[j];
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    for j in 0..d {
                        centroids[c * d + j] = sums[c * d + j] / counts[c] as f64;
                    }
                }
            }
            let cur = objective(&centroids);
            assert!(cur <= prev + 1e-9, "objective rose: {prev} -> {cur}");
            prev = cur;
        }
    }

    #[test]
    fn deterministic_given_seed_and_scale_invariant_geometry() {
        let (x, _) = blobs(3, 40, 1.0);
        let a = kmeans(&x, 120, 2, 3, 11, 10).unwrap();
        let b = kmeans(&x, 120, 2, 3, 11, 10).unwrap();
        assert_eq!(a.assignments, b.assignments);
        let scaled: Vec<f64> = x.iter().map(|v| v * 3.5).collect();
        let c = kmeans(&scaled, 120, 2, 3, 11, 10).unwrap();
        assert_eq!(a.assignments, c.assignments);
    }
}
