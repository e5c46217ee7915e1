//! Constellation capsule autoencoder: a Set Transformer encodes a 2-D point
//! set into K object capsules; per-capsule decoders emit N candidate points
//! each, and the points are explained by a single normalized Gaussian
//! mixture over all K·N candidates.

use rand::Rng;
use scae_core::geometry::{apply_affine_points, TransformMode};
use scae_core::nn::{MlpBank, SetTransformer, SetTransformerConfig};

use crate::capsules::{
    candidate_log_weights, lambda_activation, presence_from_logits, split_object_capsules,
    ObjectCapsules,
};
use crate::data::{points_to_tensors, PointSet, MAX_POINTS};
use crate::error::{Error, Result};
use crate::eval::hungarian_match;
use crate::losses::{self, LossWeights};
use crate::{ParamStore, Rng as ChaRng, Tape, TensorId};

const LOG_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone)]
pub struct CcaeConfig {
    pub num_caps: usize,
    pub num_candidates: usize,
    pub feature_dim: usize,
    pub st: SetTransformerConfig,
    pub decoder_hidden: Vec<usize>,
    pub transform_mode: TransformMode,
    pub lambda_floor: f64,
    pub noise_in_object_caps: bool,
}

impl CcaeConfig {
    /// Encoder config per the constellation architecture: 4 layers, 4 heads,
    /// 128 hidden per head, 3 seeds carrying 32 features each.
    pub fn constellation_paper() -> Self {
        let feature_dim = 32;
        CcaeConfig {
            num_caps: 3,
            num_candidates: 4,
            feature_dim,
            st: SetTransformerConfig {
                num_layers: 4,
                num_heads: 4,
                hidden_per_head: 128,
                ff_hidden: 0,
                output_dim: 7 + feature_dim,
                num_seeds: 3,
            },
            decoder_hidden: vec![128, 128],
            transform_mode: TransformMode::Affine,
            lambda_floor: 0.01,
            noise_in_object_caps: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_caps == 0 || self.num_candidates == 0 {
            return Err(Error::Config("num_capsules and num_candidates must be positive".into()));
        }
        if self.st.num_seeds != self.num_caps {
            return Err(Error::Config("set transformer seeds must equal num_capsules".into()));
        }
        if self.st.output_dim != 7 + self.feature_dim {
            return Err(Error::Config("set transformer output must be 6 + 1 + feature_dim".into()));
        }
        self.st.validate()?;
        Ok(())
    }
}

/// Candidate mixture components decoded from the object capsules.
#[derive(Debug, Clone, Copy)]
pub struct Candidates {
    /// `[B, K, N, 2]` component means in the viewer frame.
    pub mean: TensorId,
    /// `[B, K, N]` isotropic standard deviations.
    pub lambda: TensorId,
    /// `[B, K, N]` conditional presence probabilities.
    pub presence: TensorId,
    /// `[B, K, N]` normalized log mixture weights.
    pub log_weight: TensorId,
    /// Normalizer hit its floor for some example.
    pub degenerate: bool,
}

#[derive(Debug)]
pub struct Ccae {
    pub cfg: CcaeConfig,
    encoder: SetTransformer,
    decoder: MlpBank,
}

impl Ccae {
    pub fn init<R: Rng>(ps: &mut ParamStore, rng: &mut R, name: &str, cfg: CcaeConfig) -> Result<Self> {
        cfg.validate()?;
        let encoder = SetTransformer::init(ps, rng, &format!("{name}.enc"), 2, &cfg.st)?;
        let mut dims = vec![cfg.feature_dim];
        dims.extend(&cfg.decoder_hidden);
        dims.push(cfg.num_candidates * 4);
        let decoder = MlpBank::init(ps, rng, &format!("{name}.dec"), cfg.num_caps, &dims, 1.0)?;
        Ok(Ccae { cfg, encoder, decoder })
    }

    /// Encodes `points [B, M, 2]` with attention biased by `mask [B, M]`
    /// (absent points get presence 0) into K object capsules.
    pub fn encode<R: Rng>(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        points: TensorId,
        mask: TensorId,
        noise: Option<&mut R>,
    ) -> Result<ObjectCapsules> {
        let encoded = self.encoder.forward(t, ps, points, Some(mask))?;
        split_object_capsules(t, encoded, self.cfg.feature_dim, self.cfg.transform_mode, noise)
    }

    /// Decodes N candidates per capsule. Candidate offsets live in the
    /// object frame and are mapped through the capsule's OV matrix.
    pub fn decode_candidates<R: Rng>(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        caps: &ObjectCapsules,
        noise: Option<&mut R>,
    ) -> Result<Candidates> {
        let (k, n) = (self.cfg.num_caps, self.cfg.num_candidates);
        let raw = self.decoder.forward(t, ps, caps.features)?;
        let b = t.shape(raw)[0];
        let raw = t.reshape(raw, &[b, k, n, 4])?;
        let offsets = t.narrow(raw, 3, 0, 2)?;
        let pres_logit = t.narrow(raw, 3, 2, 1)?;
        let pres_logit = t.reshape(pres_logit, &[b, k, n])?;
        let lam_raw = t.narrow(raw, 3, 3, 1)?;
        let lam_raw = t.reshape(lam_raw, &[b, k, n])?;

        let mean = apply_affine_points(t, caps.ov, offsets)?;
        let lambda = lambda_activation(t, lam_raw, self.cfg.lambda_floor);
        let (presence, noisy_logit) = presence_from_logits(t, pres_logit, noise)?;
        let (log_weight, degenerate) =
            candidate_log_weights(t, caps.presence_logit, noisy_logit)?;
        Ok(Candidates { mean, lambda, presence, log_weight, degenerate })
    }

    pub fn num_components(&self) -> usize {
        self.cfg.num_caps * self.cfg.num_candidates
    }
}

/// Mixture log-likelihood of the point set under the candidates, averaged
/// over the batch; absent points contribute nothing. Also returns the
/// `[B, M, K·N]` log responsibilities.
pub fn mixture_loglik(
    t: &mut Tape,
    points: TensorId,
    mask: TensorId,
    cand: &Candidates,
) -> Result<(TensorId, TensorId)> {
    let (b, m) = (t.shape(points)[0], t.shape(points)[1]);
    let msh = t.shape(cand.mean).to_vec();
    let kn = msh[1] * msh[2];
    let pts = t.reshape(points, &[b, m, 1, 2])?;
    let mu = t.reshape(cand.mean, &[b, 1, kn, 2])?;
    let diff = t.sub(pts, mu)?;
    let sq = t.mul(diff, diff)?;
    let d2 = t.sum_axes(sq, &[3], false)?; // [B, M, KN]

    let lam = t.reshape(cand.lambda, &[b, 1, kn])?;
    let log_lam = t.log(lam);
    let lam2 = t.mul(lam, lam)?;
    let lam2x2 = t.mul_scalar(lam2, 2.0);
    let maha = t.div(d2, lam2x2)?;
    let neg2loglam = t.mul_scalar(log_lam, -2.0);
    let peak = t.add_scalar(neg2loglam, -LOG_2PI); // [B, 1, KN]
    let log_normal = t.sub(peak, maha)?; // [B, M, KN]

    let log_w = t.reshape(cand.log_weight, &[b, 1, kn])?;
    let log_resp = t.add(log_w, log_normal)?;
    let per_point = t.log_sum_exp(log_resp, 2)?; // [B, M]
    let masked = t.mul(per_point, mask)?;
    let per_example = t.sum_axes(masked, &[1], false)?;
    let loglik = t.mean_all(per_example)?;
    Ok((loglik, log_resp))
}

/// Per present point, the capsule owning the maximum-responsibility
/// component; ties break toward the lower capsule index. Absent points get
/// `usize::MAX`.
pub fn segment(log_resp: &[f64], b: usize, m: usize, num_candidates: usize, kn: usize, mask: &[f64]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![usize::MAX; m]; b];
    for bi in 0..b {
        for mi in 0..m {
            if mask[bi * m + mi] == 0.0 {
                continue;
            }
            let base = (bi * m + mi) * kn;
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for c in 0..kn {
                let v = log_resp[base + c];
                if v > best {
                    best = v;
                    arg = c;
                }
            }
            out[bi][mi] = arg / num_candidates;
        }
    }
    out
}

/// Binary labels per capsule: 1 when the capsule wins at least two present
/// points. The labels are data (no gradient); the loss is the mean binary
/// cross-entropy against prior capsule presence.
pub fn constellation_sparsity_loss(
    t: &mut Tape,
    assignments: &[Vec<usize>],
    num_caps: usize,
    a_prior: TensorId,
) -> Result<TensorId> {
    let b = assignments.len();
    let mut labels = vec![0.0f64; b * num_caps];
    for (bi, row) in assignments.iter().enumerate() {
        let mut wins = vec![0usize; num_caps];
        for &cap in row {
            if cap != usize::MAX {
                wins[cap] += 1;
            }
        }
        for (k, &w) in wins.iter().enumerate() {
            if w >= 2 {
                labels[bi * num_caps + k] = 1.0;
            }
        }
    }
    let lab = t.constant(&[b, num_caps], labels)?;
    binary_cross_entropy_mean(t, lab, a_prior)
}

/// Mean BCE between constant targets and probabilities in (0, 1).
pub fn binary_cross_entropy_mean(t: &mut Tape, targets: TensorId, probs: TensorId) -> Result<TensorId> {
    let p = t.clamp_min(probs, 1e-12);
    let log_p = t.log(p);
    let one_minus = t.neg(probs);
    let one_minus = t.add_scalar(one_minus, 1.0);
    let q = t.clamp_min(one_minus, 1e-12);
    let log_q = t.log(q);
    let pos = t.mul(targets, log_p)?;
    let neg_t = t.neg(targets);
    let neg_t = t.add_scalar(neg_t, 1.0);
    let neg = t.mul(neg_t, log_q)?;
    let s = t.add(pos, neg)?;
    let m = t.mean_all(s)?;
    Ok(t.neg(m))
}

/// Best-matching segmentation accuracy for one example: counts of
/// (predicted capsule, true constellation) pairs, matched by the Hungarian
/// algorithm, over present points only.
pub fn segmentation_accuracy(pred: &[usize], truth: &[usize], present: &[bool], num_caps: usize) -> (usize, usize) {
    let classes = truth
        .iter()
        .zip(present)
        .filter(|(_, &p)| p)
        .map(|(&c, _)| c + 1)
        .max()
        .unwrap_or(0)
        .max(num_caps);
    let mut counts = vec![vec![0.0f64; classes]; classes];
    let mut total = 0usize;
    for i in 0..pred.len() {
        if present[i] && pred[i] != usize::MAX {
            counts[pred[i]][truth[i]] += 1.0;
            total += 1;
        }
    }
    if total == 0 {
        return (0, 0);
    }
    let (perm, _) = hungarian_match(&counts).expect("square count matrix");
    let correct: f64 = perm.iter().enumerate().map(|(i, &j)| counts[i][j]).sum();
    (correct as usize, total)
}

/// One full forward pass: encode, decode, likelihood, sparsity losses.
pub struct CcaeStep {
    pub total: TensorId,
    pub components: Vec<(String, f64)>,
    pub loglik: f64,
    pub assignments: Vec<Vec<usize>>,
    pub degenerate: bool,
}

impl Ccae {
    /// Builds the training (or evaluation) objective for one batch.
    /// `noise` carries the logit-noise stream when training.
    pub fn step(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        batch: &[PointSet],
        weights: &LossWeights,
        num_classes: usize,
        mut noise: Option<&mut ChaRng>,
    ) -> Result<CcaeStep> {
        let (points, mask) = points_to_tensors(t, batch)?;
        let caps = self.encode(t, ps, points, mask, noise.as_deref_mut())?;
        let cand = self.decode_candidates(t, ps, &caps, noise.as_deref_mut())?;
        let (loglik, log_resp) = mixture_loglik(t, points, mask, &cand)?;
        let part_nll = t.neg(loglik);

        let a_prior = losses::presence_prior(t, caps.presence, cand.presence)?;
        let (prior_w, prior_b) = losses::prior_sparsity(t, a_prior, num_classes)?;

        let b = batch.len();
        let assignments = segment(
            t.value(log_resp),
            b,
            MAX_POINTS,
            self.cfg.num_candidates,
            self.num_components(),
            t.value(mask),
        );
        let too_few = constellation_sparsity_loss(t, &assignments, self.cfg.num_caps, a_prior)?;

        let (total, components) = losses::total_loss(
            t,
            &[
                ("part_nll", part_nll, weights.part_ll),
                ("prior_within", prior_w, weights.prior_within),
                ("prior_between", prior_b, weights.prior_between),
                ("too_few_active", too_few, weights.too_few_active),
            ],
        )?;
        Ok(CcaeStep {
            total,
            components,
            loglik: t.value(loglik)[0],
            assignments,
            degenerate: cand.degenerate,
        })
    }
}
