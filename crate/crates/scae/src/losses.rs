//! Sparsity regularizers over capsule presences and the weighted total
//! objective.

use crate::error::{Error, Result};
use crate::{Tape, TensorId};

/// Weights on the loss components. Likelihood terms enter negated
/// (minimization); sparsity terms as defined below.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub part_ll: f64,
    pub image_ll: f64,
    pub prior_within: f64,
    pub prior_between: f64,
    pub posterior_within: f64,
    pub posterior_between: f64,
    pub too_few_active: f64,
    pub deformation_alpha: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.part_ll,
            self.image_ll,
            self.prior_within,
            self.prior_between,
            self.posterior_within,
            self.posterior_between,
            self.too_few_active,
            self.deformation_alpha,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be finite and nonnegative".to_string()));
        }
        Ok(())
    }
}

/// Prior capsule presence `a_k · max_j a_kj` from presence `[B, K]` and
/// conditional presences `[B, K, J]`.
pub fn presence_prior(t: &mut Tape, presence: TensorId, conditional: TensorId) -> Result<TensorId> {
    let m = t.max_axis(conditional, 2)?;
    Ok(t.mul(presence, m)?)
}

/// The two prior-sparsity terms over `a_prior [B, K]`:
///
/// - within-example: mean over the batch of `(Σ_k a - K/C)²`
/// - between-example: mean over capsules of `(Σ_b a - B/C)²`
///
/// Both are exactly zero when every example activates `K/C` capsules' worth
/// of presence and usage is spread evenly across the batch.
pub fn prior_sparsity(
    t: &mut Tape,
    a_prior: TensorId,
    num_classes: usize,
) -> Result<(TensorId, TensorId)> {
    let shape = t.shape(a_prior).to_vec();
    if shape.len() != 2 {
        return Err(Error::Invalid(format!("prior_sparsity expects [B, K], got {shape:?}")));
    }
    let (b, k) = (shape[0], shape[1]);
    let c = num_classes as f64;

    let per_example = t.sum_axes(a_prior, &[1], false)?;
    let dev = t.add_scalar(per_example, -(k as f64) / c);
    let sq = t.mul(dev, dev)?;
    let within = t.mean_all(sq)?;

    let per_capsule = t.sum_axes(a_prior, &[0], false)?;
    let dev = t.add_scalar(per_capsule, -(b as f64) / c);
    let sq = t.mul(dev, dev)?;
    let between = t.mean_all(sq)?;
    Ok((within, between))
}

/// Entropy of distributions along the last axis: `-Σ p log(p + 1e-12)`.
fn entropy_rows(t: &mut Tape, p: TensorId) -> Result<TensorId> {
    let shifted = t.add_scalar(p, 1e-12);
    let lg = t.log(shifted);
    let pl = t.mul(p, lg)?;
    let rank = t.shape(p).len();
    let s = t.sum_axes(pl, &[rank - 1], false)?;
    Ok(t.neg(s))
}

fn normalize_last(t: &mut Tape, x: TensorId) -> Result<TensorId> {
    let rank = t.shape(x).len();
    let s = t.sum_axes(x, &[rank - 1], true)?;
    let s = t.clamp_min(s, 1e-12);
    Ok(t.div(x, s)?)
}

/// Posterior-sparsity entropy terms over `a_posterior [B, K, M]`.
///
/// With `v̂_b` the per-example capsule distribution (normalized over k of
/// `Σ_m a_post`) and `v̄` the batch-aggregated one, the default returns the
/// terms of the loss as the equation states them:
///
/// ```text
/// within  = -(1/B) Σ_b H(v̂_b)        between = (1/K) · H(v̄)
/// ```
///
/// `prose_reading` flips both signs, giving the "minimize within-example
/// entropy, maximize between-example entropy" reading of the surrounding
/// text. Both are exposed because the two disagree; the weights from the
/// hyperparameter table apply to whichever is selected.
pub fn posterior_sparsity(
    t: &mut Tape,
    a_posterior: TensorId,
    prose_reading: bool,
) -> Result<(TensorId, TensorId)> {
    let shape = t.shape(a_posterior).to_vec();
    if shape.len() != 3 {
        return Err(Error::Invalid(format!("posterior_sparsity expects [B, K, M], got {shape:?}")));
    }
    let k = shape[1];

    let s_bk = t.sum_axes(a_posterior, &[2], false)?; // [B, K]
    let v_hat = normalize_last(t, s_bk)?;
    let h_hat = entropy_rows(t, v_hat)?; // [B]
    let within_raw = t.mean_all(h_hat)?;

    let t_k = t.sum_axes(s_bk, &[0], false)?; // [K]
    let v_bar = normalize_last(t, t_k)?;
    let h_bar = entropy_rows(t, v_bar)?; // scalar
    let between_raw = t.mul_scalar(h_bar, 1.0 / k as f64);

    if prose_reading {
        let between = t.neg(between_raw);
        Ok((within_raw, between))
    } else {
        let within = t.neg(within_raw);
        Ok((within, between_raw))
    }
}

/// Weighted sum of named scalar components. Every component value is
/// checked for finiteness; the first non-finite one aborts the step with
/// its name. Returns the total along with `(name, raw_value)` pairs for
/// logging.
pub fn total_loss(
    t: &mut Tape,
    components: &[(&str, TensorId, f64)],
) -> Result<(TensorId, Vec<(String, f64)>)> {
    let mut logged = Vec::with_capacity(components.len());
    let mut total: Option<TensorId> = None;
    for &(name, id, weight) in components {
        let raw = t.value(id)[0];
        if !raw.is_finite() {
            return Err(Error::NonFiniteLoss(name.to_string()));
        }
        logged.push((name.to_string(), raw));
        if weight == 0.0 {
            continue;
        }
        let scaled = t.mul_scalar(id, weight);
        total = Some(match total {
            Some(acc) => t.add(acc, scaled)?,
            None => scaled,
        });
    }
    let total = match total {
        Some(id) => id,
        None => t.scalar(0.0),
    };
    Ok((total, logged))
}
