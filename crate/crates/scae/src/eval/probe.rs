//! Supervised linear probe on frozen presence vectors: softmax
//! cross-entropy, full-batch gradient descent, K×C weights + C biases.

use crate::error::{Error, Result};

pub const PROBE_LR: f64 = 0.1;
pub const PROBE_EPOCHS: usize = 1000;

pub fn probe_parameter_count(features: usize, classes: usize) -> usize {
    features * classes + classes
}

/// Trains the probe on `(train_x [n, k], train_y)` and returns accuracy on
/// the test split. Deterministic: zero init, fixed epochs, the upstream
/// features are never touched.
pub fn linear_probe(
    train_x: &[f64],
    train_y: &[u8],
    test_x: &[f64],
    test_y: &[u8],
    features: usize,
    classes: usize,
) -> Result<f64> {
    let n = train_y.len();
    if n == 0 || train_x.len() != n * features {
        return Err(Error::Invalid("probe: empty or misshapen training split".to_string()));
    }
    let mut w = vec![0.0f64; features * classes];
    let mut b = vec![0.0f64; classes];
    let mut probs = vec![0.0f64; n * classes];
    for _ in 0..PROBE_EPOCHS {
        // Forward: softmax(xW + b) rowwise.
        for i in 0..n {
            let x = &train_x[i * features..(i + 1) * features];
            let row = &mut probs[i * classes..(i + 1) * classes];
            for c in 0..classes {
                let mut z = b[c];
                for j in 0..features {
                    z += x[j] * w[j * classes + c];
                }
                row[c] = z;
            }
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        // Gradient: Xᵀ(p - y) / n.
        let mut gw = vec![0.0f64; features * classes];
        let mut gb = vec![0.0f64; classes];
        for i in 0..n {
            let x = &train_x[i * features..(i + 1) * features];
            let row = &probs[i * classes..(i + 1) * classes];
            for c in 0..classes {
                let delta = row[c] - if train_y[i] as usize == c { 1.0 } else { 0.0 };
                gb[c] += delta;
                for j in 0..features {
                    gw[j * classes + c] += x[j] * delta;
                }
            }
        }
        let inv = 1.0 / n as f64;
        for (wv, gv) in w.iter_mut().zip(&gw) {
            *wv -= PROBE_LR * gv * inv;
        }
        for (bv, gv) in b.iter_mut().zip(&gb) {
            *bv -= PROBE_LR * gv * inv;
        }
    }
    // Test accuracy.
    let m = test_y.len();
    let mut correct = 0usize;
    for i in 0..m {
        let x = &test_x[i * features..(i + 1) * features];
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for c in 0..classes {
            let mut z = b[c];
            for j in 0..features {
                z += x[j] * w[j * classes + c];
            }
            if z > best {
                best = z;
                arg = c;
            }
        }
        if arg == test_y[i] as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / m as f64)
}
