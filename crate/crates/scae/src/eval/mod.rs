//! Unsupervised-classification metrics over frozen capsule presences.

mod hungarian;
mod kmeans;
mod probe;

pub use hungarian::{hungarian_match, hungarian_min};
pub use kmeans::{kmeans, KmeansResult};
pub use probe::{linear_probe, probe_parameter_count, PROBE_EPOCHS, PROBE_LR};

use crate::error::Result;

pub const KMEANS_RESTARTS: usize = 10;

/// N×K presence vectors with class labels, the input to both metrics.
#[derive(Debug, Clone)]
pub struct PresenceMatrix {
    pub presences: Vec<f64>,
    pub num_features: usize,
    pub labels: Vec<u8>,
}

impl PresenceMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Clusters presence vectors with k-means and reports the accuracy of the
/// best cluster-to-class permutation.
pub fn lin_match(pm: &PresenceMatrix, classes: usize, seed: u64) -> Result<f64> {
    let n = pm.len();
    let res = kmeans(&pm.presences, n, pm.num_features, classes, seed, KMEANS_RESTARTS)?;
    let mut confusion = vec![vec![0.0f64; classes]; classes];
    for (i, &c) in res.assignments.iter().enumerate() {
        confusion[c][pm.labels[i] as usize] += 1.0;
    }
    let (_, acc) = hungarian_match(&confusion)?;
    Ok(acc)
}

/// Trains the linear probe on `train` and reports accuracy on `test`.
pub fn lin_pred(train: &PresenceMatrix, test: &PresenceMatrix, classes: usize) -> Result<f64> {
    linear_probe(
        &train.presences,
        &train.labels,
        &test.presences,
        &test.labels,
        train.num_features,
        classes,
    )
}
