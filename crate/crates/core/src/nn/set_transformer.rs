//! Set Transformer: self-attention blocks over a set of tokens followed by
//! pooling-by-multihead-attention onto learned seed vectors. Attention over
//! keys can be biased by token presence so absent tokens are ignored.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{uniform_init, Linear};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tape::{Tape, TensorId};

const LN_EPS: f64 = 1e-6;
/// Presence enters attention logits as log(d + ε); ε bounds the weight an
/// absent token can still receive.
const PRESENCE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetTransformerConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_per_head: usize,
    /// Width of the per-token feed-forward; 0 means "equal to the model dim".
    pub ff_hidden: usize,
    pub output_dim: usize,
    pub num_seeds: usize,
}

impl SetTransformerConfig {
    pub fn model_dim(&self) -> usize {
        self.num_heads * self.hidden_per_head
    }

    pub fn ff_dim(&self) -> usize {
        if self.ff_hidden == 0 {
            self.model_dim()
        } else {
            self.ff_hidden
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.num_layers > 0
            && self.num_heads > 0
            && self.hidden_per_head > 0
            && self.output_dim > 0
            && self.num_seeds > 0;
        if !ok {
            return Err(Error::invalid(
                "set_transformer",
                format!("all config fields must be positive: {self:?}"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct LayerNormParams {
    gamma: String,
    beta: String,
}

impl LayerNormParams {
    fn init<S: Scalar>(ps: &mut ParamStore<S>, name: &str, dim: usize) -> Result<Self> {
        let gamma = format!("{name}.g");
        let beta = format!("{name}.b");
        ps.insert(&gamma, vec![dim], vec![S::one(); dim])?;
        ps.insert(&beta, vec![dim], vec![S::zero(); dim])?;
        Ok(LayerNormParams { gamma, beta })
    }

    fn forward<S: Scalar>(&self, t: &mut Tape<S>, ps: &ParamStore<S>, x: TensorId) -> Result<TensorId> {
        let g = t.leaf(&self.gamma, ps.get(&self.gamma)?);
        let b = t.leaf(&self.beta, ps.get(&self.beta)?);
        t.layer_norm(x, g, b, S::cast(LN_EPS))
    }
}

#[derive(Debug, Clone)]
struct MultiheadAttention {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    heads: usize,
    head_dim: usize,
}

impl MultiheadAttention {
    fn init<S: Scalar, R: Rng>(
        ps: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Result<Self> {
        Ok(MultiheadAttention {
            wq: Linear::init(ps, rng, &format!("{name}.q"), dim, dim, false)?,
            wk: Linear::init(ps, rng, &format!("{name}.k"), dim, dim, false)?,
            wv: Linear::init(ps, rng, &format!("{name}.v"), dim, dim, false)?,
            wo: Linear::init(ps, rng, &format!("{name}.o"), dim, dim, false)?,
            heads,
            head_dim: dim / heads,
        })
    }

    /// `queries [B, Mq, d]`, `keys [B, Mk, d]`, optional attention bias
    /// `[B, 1, 1, Mk]` added to the pre-softmax logits over keys.
    fn forward<S: Scalar>(
        &self,
        t: &mut Tape<S>,
        ps: &ParamStore<S>,
        queries: TensorId,
        keys: TensorId,
        bias: Option<TensorId>,
    ) -> Result<TensorId> {
        let (b, mq) = (t.shape(queries)[0], t.shape(queries)[1]);
        let mk = t.shape(keys)[1];
        let (h, dk) = (self.heads, self.head_dim);
        let split = |t: &mut Tape<S>, x: TensorId, m: usize| -> Result<TensorId> {
            let r = t.reshape(x, &[b, m, h, dk])?;
            t.permute(r, &[0, 2, 1, 3])
        };
        let q = self.wq.forward(t, ps, queries)?;
        let k = self.wk.forward(t, ps, keys)?;
        let v = self.wv.forward(t, ps, keys)?;
        let q = split(t, q, mq)?;
        let k = split(t, k, mk)?;
        let v = split(t, v, mk)?;
        let kt = t.transpose_last(k)?;
        let logits = t.matmul(q, kt)?;
        let mut logits = t.mul_scalar(logits, S::cast(1.0 / (dk as f64).sqrt()));
        if let Some(bias) = bias {
            logits = t.add(logits, bias)?;
        }
        let att = t.softmax(logits, 3)?;
        let ctx = t.matmul(att, v)?;
        let ctx = t.permute(ctx, &[0, 2, 1, 3])?;
        let merged = t.reshape(ctx, &[b, mq, h * dk])?;
        self.wo.forward(t, ps, merged)
    }
}

/// Multihead attention block with residuals, layer norm, and a row-wise
/// feed-forward, as in the Set Transformer's MAB.
#[derive(Debug, Clone)]
struct AttentionBlock {
    mha: MultiheadAttention,
    ln1: LayerNormParams,
    ff1: Linear,
    ff2: Linear,
    ln2: LayerNormParams,
}

impl AttentionBlock {
    fn init<S: Scalar, R: Rng>(
        ps: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        dim: usize,
        heads: usize,
        ff: usize,
    ) -> Result<Self> {
        Ok(AttentionBlock {
            mha: MultiheadAttention::init(ps, rng, &format!("{name}.mha"), dim, heads)?,
            ln1: LayerNormParams::init(ps, &format!("{name}.ln1"), dim)?,
            ff1: Linear::init(ps, rng, &format!("{name}.ff1"), dim, ff, true)?,
            ff2: Linear::init(ps, rng, &format!("{name}.ff2"), ff, dim, true)?,
            ln2: LayerNormParams::init(ps, &format!("{name}.ln2"), dim)?,
        })
    }

    fn forward<S: Scalar>(
        &self,
        t: &mut Tape<S>,
        ps: &ParamStore<S>,
        queries: TensorId,
        keys: TensorId,
        bias: Option<TensorId>,
    ) -> Result<TensorId> {
        let att = self.mha.forward(t, ps, queries, keys, bias)?;
        let res = t.add(queries, att)?;
        let h = self.ln1.forward(t, ps, res)?;
        let f = self.ff1.forward(t, ps, h)?;
        let f = t.relu(f);
        let f = self.ff2.forward(t, ps, f)?;
        let res2 = t.add(h, f)?;
        self.ln2.forward(t, ps, res2)
    }
}

#[derive(Debug, Clone)]
pub struct SetTransformer {
    cfg: SetTransformerConfig,
    input: Linear,
    blocks: Vec<AttentionBlock>,
    seeds: String,
    pma: AttentionBlock,
    output: Linear,
}

impl SetTransformer {
    pub fn init<S: Scalar, R: Rng>(
        ps: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        input_dim: usize,
        cfg: &SetTransformerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.model_dim();
        let ff = cfg.ff_dim();
        let input = Linear::init(ps, rng, &format!("{name}.in"), input_dim, d, true)?;
        let mut blocks = Vec::with_capacity(cfg.num_layers);
        for i in 0..cfg.num_layers {
            blocks.push(AttentionBlock::init(ps, rng, &format!("{name}.sab{i}"), d, cfg.num_heads, ff)?);
        }
        let seeds = format!("{name}.seeds");
        let bound = (1.0 / d as f64).sqrt();
        ps.insert(&seeds, vec![cfg.num_seeds, d], uniform_init(rng, -bound, bound, cfg.num_seeds * d))?;
        let pma = AttentionBlock::init(ps, rng, &format!("{name}.pma"), d, cfg.num_heads, ff)?;
        let output = Linear::init(ps, rng, &format!("{name}.out"), d, cfg.output_dim, true)?;
        Ok(SetTransformer { cfg: cfg.clone(), input, blocks, seeds, pma, output })
    }

    pub fn config(&self) -> &SetTransformerConfig {
        &self.cfg
    }

    /// Encodes a token set `[B, M, d_in]` into `[B, K, output_dim]`.
    /// Permuting tokens (together with `presence`) leaves the output
    /// unchanged. With `presence` given, `log(p + 1e-6)` is added to every
    /// attention logit over keys, masking absent tokens up to ε.
    pub fn forward<S: Scalar>(
        &self,
        t: &mut Tape<S>,
        ps: &ParamStore<S>,
        tokens: TensorId,
        presence: Option<TensorId>,
    ) -> Result<TensorId> {
        let shape = t.shape(tokens).to_vec();
        if shape.len() != 3 {
            return Err(Error::invalid("set_transformer", format!("tokens must be [B, M, d], got {shape:?}")));
        }
        let (b, m) = (shape[0], shape[1]);
        if m == 0 {
            return Err(Error::invalid("set_transformer", "empty input set".to_string()));
        }
        let bias = match presence {
            Some(p) => {
                if t.shape(p) != [b, m] {
                    return Err(Error::invalid(
                        "set_transformer",
                        format!("presence must be [B, M] = [{b}, {m}], got {:?}", t.shape(p)),
                    ));
                }
                let eps = t.add_scalar(p, S::cast(PRESENCE_EPS));
                let lg = t.log(eps);
                Some(t.reshape(lg, &[b, 1, 1, m])?)
            }
            None => None,
        };
        let mut x = self.input.forward(t, ps, tokens)?;
        for block in &self.blocks {
            x = block.forward(t, ps, x, x, bias)?;
        }
        let seeds = t.leaf(&self.seeds, ps.get(&self.seeds)?);
        let d = self.cfg.model_dim();
        let seeds = t.reshape(seeds, &[1, self.cfg.num_seeds, d])?;
        let seeds = t.broadcast_to(seeds, &[b, self.cfg.num_seeds, d])?;
        let pooled = self.pma.forward(t, ps, seeds, x, bias)?;
        self.output.forward(t, ps, pooled)
    }
}
