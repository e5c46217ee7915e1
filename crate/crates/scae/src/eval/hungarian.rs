//! Hungarian algorithm (O(n³), potentials + shortest augmenting paths) for
//! the cluster-to-class assignment used by the unsupervised classification
//! metrics.

use crate::error::{Error, Result};

/// Minimum-cost perfect assignment on a square cost matrix.
/// Returns `perm` with `perm[row] = col`.
pub fn hungarian_min(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if n == 0 || cost.iter().any(|r| r.len() != n) {
        return Err(Error::Invalid("hungarian needs a non-empty square matrix".to_string()));
    }
    // 1-indexed potentials; p[j] is the row matched to column j.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    Ok(perm)
}

/// Maximum-weight perfect matching on a nonnegative confusion matrix:
/// the permutation of cluster indices that maximizes matched counts, plus
/// the resulting accuracy (matched / total).
pub fn hungarian_match(confusion: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let mut maxv = 0.0f64;
    for row in confusion {
        for &c in row {
            if c < 0.0 {
                return Err(Error::Invalid("confusion counts must be nonnegative".to_string()));
            }
            maxv = maxv.max(c);
        }
    }
    let cost: Vec<Vec<f64>> =
        confusion.iter().map(|r| r.iter().map(|&w| maxv - w).collect()).collect();
    let perm = hungarian_min(&cost)?;
    let total: f64 = confusion.iter().flatten().sum();
    let matched: f64 = perm.iter().enumerate().map(|(i, &j)| confusion[i][j]).sum();
    let accuracy = if total > 0.0 { matched / total } else { 0.0 };
    Ok((perm, accuracy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_max(w: &[Vec<f64>]) -> f64 {
        let n = w.len();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut best = f64::NEG_INFINITY;
        // Heap's algorithm over all n! permutations.
        fn heaps(k: usize, idx: &mut Vec<usize>, w: &[Vec<f64>], best: &mut f64) {
            if k == 1 {
                let s: f64 = idx.iter().enumerate().map(|(i, &j)| w[i][j]).sum();
                if s > *best {
                    *best = s;
                }
                return;
            }
            for i in 0..k {
                heaps(k - 1, idx, w, best);
                if k % 2 == 0 {
                    idx.swap(i, k - 1);
                } else {
                    idx.swap(0, k - 1);
                }
            }
        }
        heaps(n, &mut idx, w, &mut best);
        best
    }

    #[test]
    fn diagonal_confusion_is_identity_with_full_accuracy() {
        let c: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 5.0 } else { 0.0 }).collect())
            .collect();
        let (perm, acc) = hungarian_match(&c).unwrap();
        assert_eq!(perm, vec![0, 1, 2, 3]);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn anti_diagonal_reverses() {
        let n = 5;
        let c: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i + j == n - 1 { 3.0 } else { 0.0 }).collect())
            .collect();
        let (perm, acc) = hungarian_match(&c).unwrap();
        assert_eq!(perm, vec![4, 3, 2, 1, 0]);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn matches_exhaustive_search_up_to_n7() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in [5usize, 6, 7] {
            for _ in 0..8 {
                let w: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.gen_range(0.0f64..20.0).round()).collect())
                    .collect();
                let (perm, _) = hungarian_match(&w).unwrap();
                let got: f64 = perm.iter().enumerate().map(|(i, &j)| w[i][j]).sum();
                let best = brute_force_max(&w);
                assert!(
                    (got - best).abs() < 1e-9,
                    "n={n}: hungarian {got} vs brute force {best}"
                );
            }
        }
    }

    #[test]
    fn accuracy_dominates_any_manual_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 6;
        let w: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(0.0f64..9.0).round()).collect()).collect();
        let (_, acc) = hungarian_match(&w).unwrap();
        let total: f64 = w.iter().flatten().sum();
        let mut perm: Vec<usize> = (0..n).collect();
        for _ in 0..50 {
            use rand::seq::SliceRandom;
            perm.shuffle(&mut rng);
            let manual: f64 = perm.iter().enumerate().map(|(i, &j)| w[i][j]).sum::<f64>() / total;
            assert!(acc >= manual - 1e-12);
        }
    }
}
