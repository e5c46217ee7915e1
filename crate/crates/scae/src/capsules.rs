//! Machinery shared by the constellation and object capsule decoders:
//! splitting encoder outputs into capsule fields, presence handling in log
//! space, scale activation, and the normalized mixture weights.

use rand::Rng;
use scae_core::geometry::{pose_to_matrix_t, TransformMode};

use crate::error::Result;
use crate::{Tape, TensorId};

/// Floor added to the softplus scale activation so mixture components cannot
/// collapse onto single points.
pub const LAMBDA_FLOOR: f64 = 0.01;

/// Normalizer floor for mixture weights (log domain).
pub const WEIGHT_NORM_FLOOR: f64 = 1e-8;

/// Output of a capsule encoder: per-capsule pose (both raw and as a matrix),
/// features, and presence.
#[derive(Debug, Clone, Copy)]
pub struct ObjectCapsules {
    /// `[B, K, 6]` raw pose parameters.
    pub pose_params: TensorId,
    /// `[B, K, 3, 3]` object-viewer matrices.
    pub ov: TensorId,
    /// `[B, K, F]` capsule feature vectors.
    pub features: TensorId,
    /// `[B, K]` presence probabilities (after optional logit noise).
    pub presence: TensorId,
    /// `[B, K]` presence logits including injected noise; `log presence`
    /// is derived from these for numerical stability.
    pub presence_logit: TensorId,
}

/// Splits a Set Transformer output `[B, K, 6 + 1 + F]` into capsule fields.
pub fn split_object_capsules<R: Rng>(
    t: &mut Tape,
    encoded: TensorId,
    feature_dim: usize,
    mode: TransformMode,
    noise: Option<&mut R>,
) -> Result<ObjectCapsules> {
    let shape = t.shape(encoded).to_vec();
    let (b, k) = (shape[0], shape[1]);
    debug_assert_eq!(shape[2], 7 + feature_dim);
    let pose_params = t.narrow(encoded, 2, 0, 6)?;
    let logit_col = t.narrow(encoded, 2, 6, 1)?;
    let features = t.narrow(encoded, 2, 7, feature_dim)?;
    let logit = t.reshape(logit_col, &[b, k])?;
    let noisy_logit = match noise {
        Some(rng) => {
            let u = scae_core::nn::uniform_init(rng, -2.0, 2.0, b * k);
            let c = t.constant(&[b, k], u)?;
            t.add(logit, c)?
        }
        None => logit,
    };
    let presence = t.sigmoid(noisy_logit);
    let ov = pose_to_matrix_t(t, pose_params, mode)?;
    Ok(ObjectCapsules { pose_params, ov, features, presence, presence_logit: noisy_logit })
}

/// Adds uniform `[-2, 2]` noise to logits when a generator is supplied and
/// returns `(presence, noisy_logit)`.
pub fn presence_from_logits<R: Rng>(
    t: &mut Tape,
    logits: TensorId,
    noise: Option<&mut R>,
) -> Result<(TensorId, TensorId)> {
    let noisy = match noise {
        Some(rng) => {
            let shape = t.shape(logits).to_vec();
            let u = scae_core::nn::uniform_init(rng, -2.0, 2.0, t.value(logits).len());
            let c = t.constant(&shape, u)?;
            t.add(logits, c)?
        }
        None => logits,
    };
    Ok((t.sigmoid(noisy), noisy))
}

/// Isotropic standard deviation from a raw activation: softplus plus floor.
pub fn lambda_activation(t: &mut Tape, raw: TensorId, floor: f64) -> TensorId {
    let sp = t.softplus(raw);
    t.add_scalar(sp, floor)
}

/// `log sigmoid` of a logit, computed stably.
fn log_presence(t: &mut Tape, logit: TensorId) -> TensorId {
    t.log_sigmoid(logit)
}

/// Normalized log mixture weights `log(a_k a_kj / Σ_i Σ_j a_i a_ij)` from
/// presence logits `[B, K]` and conditional logits `[B, K, J]`. The
/// normalizer is floored at 1e-8; `degenerate` reports whether the floor was
/// hit for any batch element.
pub fn candidate_log_weights(
    t: &mut Tape,
    presence_logit: TensorId,
    cond_logit: TensorId,
) -> Result<(TensorId, bool)> {
    let shape = t.shape(cond_logit).to_vec();
    let (b, k, j) = (shape[0], shape[1], shape[2]);
    let log_a = log_presence(t, presence_logit);
    let log_a = t.reshape(log_a, &[b, k, 1])?;
    let log_cond = log_presence(t, cond_logit);
    let log_joint = t.add(log_a, log_cond)?;
    let flat = t.reshape(log_joint, &[b, k * j])?;
    let log_norm = t.log_sum_exp(flat, 1)?;
    let floor = WEIGHT_NORM_FLOOR.ln();
    let degenerate = t.value(log_norm).iter().any(|&v| v < floor);
    let log_norm = t.clamp_min(log_norm, floor);
    let log_norm = t.reshape(log_norm, &[b, 1, 1])?;
    let log_w = t.sub(log_joint, log_norm)?;
    Ok((log_w, degenerate))
}
