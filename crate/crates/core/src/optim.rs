//! RMSProp with momentum, following the TensorFlow update:
//!
//! ```text
//! ms  <- decay * ms + (1 - decay) * g²
//! mom <- momentum * mom + lr * g / sqrt(ms + eps)
//! p   <- p - mom
//! ```

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct RmsPropConfig<S> {
    pub learning_rate: S,
    pub decay: S,
    pub momentum: S,
    pub epsilon: S,
}

impl<S: Scalar> RmsPropConfig<S> {
    /// Epsilon tied to the batch size: `(10 * batch_size)^-2`.
    pub fn epsilon_for_batch(batch_size: usize) -> S {
        let d = S::cast(10.0 * batch_size as f64);
        S::one() / (d * d)
    }
}

#[derive(Debug)]
pub struct RmsProp<S> {
    cfg: RmsPropConfig<S>,
    /// Per-parameter (mean-square, momentum) accumulators, keyed by name.
    state: IndexMap<String, (Vec<S>, Vec<S>)>,
}

impl<S: Scalar> RmsProp<S> {
    pub fn new(cfg: RmsPropConfig<S>) -> Self {
        RmsProp { cfg, state: IndexMap::new() }
    }

    pub fn config(&self) -> &RmsPropConfig<S> {
        &self.cfg
    }

    pub fn set_learning_rate(&mut self, lr: S) {
        self.cfg.learning_rate = lr;
    }

    /// Applies one update. `grads` maps parameter names to gradient buffers;
    /// parameters without an entry are left untouched. Any non-finite
    /// gradient rejects the whole step.
    pub fn step(&mut self, params: &mut ParamStore<S>, grads: &IndexMap<String, Vec<S>>) -> Result<()> {
        for (name, g) in grads {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGrad(name.clone()));
            }
        }
        let names: Vec<String> = params.names().map(str::to_string).collect();
        for name in names {
            let Some(g) = grads.get(&name) else { continue };
            let n = g.len();
            let (ms, mom) = self
                .state
                .entry(name.clone())
                .or_insert_with(|| (vec![S::zero(); n], vec![S::zero(); n]));
            let p = params.values_mut(&name)?;
            let one = S::one();
            let cfg = &self.cfg;
            for j in 0..n {
                ms[j] = cfg.decay * ms[j] + (one - cfg.decay) * g[j] * g[j];
                mom[j] = cfg.momentum * mom[j] + cfg.learning_rate * g[j] / (ms[j] + cfg.epsilon).sqrt();
                p[j] = p[j] - mom[j];
            }
        }
        Ok(())
    }

    /// Accumulators in deterministic order, for checkpointing.
    pub fn state(&self) -> impl Iterator<Item = (&str, &(Vec<S>, Vec<S>))> {
        self.state.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn load_state(&mut self, entries: Vec<(String, (Vec<S>, Vec<S>))>) {
        self.state = entries.into_iter().collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, vals: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert(name, vec![vals.len()], vals.to_vec()).unwrap();
        s
    }

    #[test]
    fn epsilon_formula_matches_hand_value() {
        // (10 * 128)^-2
        let eps: f64 = RmsPropConfig::<f64>::epsilon_for_batch(128);
        assert_eq!(eps, 6.103515625e-7);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut store = store_with("w", &[1.5, -0.5]);
        let mut opt = RmsProp::new(RmsPropConfig {
            learning_rate: 0.1,
            decay: 0.9,
            momentum: 0.9,
            epsilon: 1e-8,
        });
        let mut grads = IndexMap::new();
        grads.insert("w".to_string(), vec![0.0, 0.0]);
        opt.step(&mut store, &grads).unwrap();
        assert_eq!(&store.get("w").unwrap().data[..], &[1.5, -0.5]);
    }

    #[test]
    fn single_step_matches_scalar_reference() {
        // Independent scalar reference for f(w) = w², w = 1, lr = 0.1.
        let (lr, decay, momentum, eps) = (0.1, 0.9, 0.9, 1e-8);
        let w0: f64 = 1.0;
        let g = 2.0 * w0;
        let ms = (1.0 - decay) * g * g;
        let mom = lr * g / (ms + eps).sqrt();
        let expect = w0 - mom;

        let mut store = store_with("w", &[w0]);
        let mut opt = RmsProp::new(RmsPropConfig {
            learning_rate: lr,
            decay,
            momentum,
            epsilon: eps,
        });
        let mut grads = IndexMap::new();
        grads.insert("w".to_string(), vec![g]);
        opt.step(&mut store, &grads).unwrap();
        let got = store.get("w").unwrap().data[0];
        assert!((got - expect).abs() < 1e-15, "got {got}, expected {expect}");
    }

    #[test]
    fn non_finite_gradient_is_rejected_with_name() {
        let mut store = store_with("enc.w", &[1.0]);
        let mut opt = RmsProp::new(RmsPropConfig {
            learning_rate: 0.1,
            decay: 0.9,
            momentum: 0.9,
            epsilon: 1e-8,
        });
        let mut grads = IndexMap::new();
        grads.insert("enc.w".to_string(), vec![f64::NAN]);
        let err = opt.step(&mut store, &grads).unwrap_err();
        assert!(err.to_string().contains("enc.w"));
        // Parameter untouched by the rejected step.
        assert_eq!(store.get("enc.w").unwrap().data[0], 1.0);
    }
}
