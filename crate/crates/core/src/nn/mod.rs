//! Network building blocks: linear layers, MLPs, CNN stacks, the Set
//! Transformer encoder, attention-based pooling, and the noisy presence
//! activation.

mod cnn;
mod pool;
mod set_transformer;

pub use cnn::{CnnConfig, CnnEncoder};
pub use pool::attention_pool;
pub use set_transformer::{SetTransformer, SetTransformerConfig};

use rand::Rng;

use crate::error::Result;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tape::{Tape, TensorId};

pub fn uniform_init<S: Scalar, R: Rng>(rng: &mut R, lo: f64, hi: f64, n: usize) -> Vec<S> {
    (0..n).map(|_| S::cast(rng.gen_range(lo..hi))).collect()
}

/// Glorot/Xavier uniform: ±sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<S: Scalar, R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<S> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform_init(rng, -bound, bound, n)
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: String,
    pub b: Option<String>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn init<S: Scalar, R: Rng>(
        ps: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    ) -> Result<Self> {
        Self::init_scaled(ps, rng, name, in_dim, out_dim, bias, 1.0)
    }

    /// `scale` shrinks the Glorot bound; parameter heads that should start
    /// near the identity use a small one.
    pub fn init_scaled<S: Scalar, R: Rng>(
        ps: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        scale: f64,
    ) -> Result<Self> {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt() * scale;
        let w = format!("{name}.w");
        ps.insert(&w, vec![in_dim, out_dim], uniform_init(rng, -bound, bound, in_dim * out_dim))?;
        let b = if bias {
            let b = format!("{name}.b");
            ps.insert(&b, vec![out_dim], vec![S::zero(); out_dim])?;
            Some(b)
        } else {
            None
        };
        Ok(Linear { w, b: b.clone(), in_dim, out_dim })
    }

    pub fn forward<S: Scalar>(&self, t: &mut Tape<S>, ps: &ParamStore<S>, x: TensorId) -> Result<TensorId> {
        let w = t.leaf(&self.w, ps.get(&self.w)?);
        let y = t.matmul(x, w)?;
        match &self.b {
            Some(bn) => {
                let b = t.leaf(bn, ps.get(bn)?);
                t.add(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Fully-connected stack with ReLU between layers and a linear head.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn init<S: Scalar, R: Rng>(
        ps: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        dims: &[usize],
    ) -> Result<Self> {
        Self::init_head_scaled(ps, rng, name, dims, 1.0)
    }

    /// Like [`Mlp::init`] but with the final layer's weights shrunk.
    pub fn init_head_scaled<S: Scalar, R: Rng>(
        ps: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        dims: &[usize],
        head_scale: f64,
    ) -> Result<Self> {
        assert!(dims.len() >= 2, "an MLP needs input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let scale = if i + 2 == dims.len() { head_scale } else { 1.0 };
            layers.push(Linear::init_scaled(
                ps,
                rng,
                &format!("{name}.l{i}"),
                dims[i],
                dims[i + 1],
                true,
                scale,
            )?);
        }
        Ok(Mlp { layers })
    }

    pub fn forward<S: Scalar>(&self, t: &mut Tape<S>, ps: &ParamStore<S>, x: TensorId) -> Result<TensorId> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(t, ps, h)?;
            if i + 1 < self.layers.len() {
                h = t.relu(h);
            }
        }
        Ok(h)
    }
}

/// A bank of `k` independent MLPs with identical layout, evaluated batched:
/// slice `i` of the weight tensors is its own network. Used for per-capsule
/// decoders, where every capsule owns a separate decoder.
#[derive(Debug, Clone)]
pub struct MlpBank {
    pub bank: usize,
    layers: Vec<(String, String)>,
    dims: Vec<usize>,
}

impl MlpBank {
    pub fn init<S: Scalar, R: Rng>(
        ps: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        bank: usize,
        dims: &[usize],
        head_scale: f64,
    ) -> Result<Self> {
        assert!(dims.len() >= 2, "an MLP bank needs input and output dims");
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let (din, dout) = (dims[i], dims[i + 1]);
            let scale = if i + 2 == dims.len() { head_scale } else { 1.0 };
            let bound = (6.0 / (din + dout) as f64).sqrt() * scale;
            let w = format!("{name}.l{i}.w");
            let b = format!("{name}.l{i}.b");
            ps.insert(&w, vec![bank, din, dout], uniform_init(rng, -bound, bound, bank * din * dout))?;
            ps.insert(&b, vec![bank, 1, dout], vec![S::zero(); bank * dout])?;
            layers.push((w, b));
        }
        Ok(MlpBank { bank, layers, dims: dims.to_vec() })
    }

    /// `[B, k, d_in] -> [B, k, d_out]`, each of the `k` rows through its own
    /// network.
    pub fn forward<S: Scalar>(&self, t: &mut Tape<S>, ps: &ParamStore<S>, x: TensorId) -> Result<TensorId> {
        let shape = t.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != self.bank || shape[2] != self.dims[0] {
            return Err(crate::error::Error::invalid(
                "mlp_bank",
                format!("expected [B, {}, {}], got {shape:?}", self.bank, self.dims[0]),
            ));
        }
        let b = shape[0];
        let mut h = t.permute(x, &[1, 0, 2])?; // [k, B, d]
        for (i, (wn, bn)) in self.layers.iter().enumerate() {
            let w = t.leaf(wn, ps.get(wn)?);
            let bias = t.leaf(bn, ps.get(bn)?);
            h = t.matmul(h, w)?;
            h = t.add(h, bias)?;
            if i + 1 < self.layers.len() {
                h = t.relu(h);
            }
        }
        let out = t.permute(h, &[1, 0, 2])?;
        let dout = *self.dims.last().unwrap();
        t.reshape(out, &[b, self.bank, dout])
    }
}

/// Presence probability from a logit. During training, uniform noise in
/// `[-2, 2]` is injected before the sigmoid to push logits away from zero;
/// evaluation applies the plain sigmoid.
pub fn noisy_presence<S: Scalar, R: Rng>(
    t: &mut Tape<S>,
    logits: TensorId,
    noise: Option<&mut R>,
) -> Result<TensorId> {
    let pre = match noise {
        Some(rng) => {
            let shape = t.shape(logits).to_vec();
            let u = uniform_init(rng, -2.0, 2.0, t.value(logits).len());
            let c = t.constant(&shape, u)?;
            t.add(logits, c)?
        }
        None => logits,
    };
    Ok(t.sigmoid(pre))
}
