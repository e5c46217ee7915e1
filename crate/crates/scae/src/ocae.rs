//! Object capsule autoencoder: groups part capsules into objects. Part
//! tokens (pose, special features, flattened template) feed a Set
//! Transformer whose attention is biased by part presence; each object
//! capsule votes for every part pose through OV ∘ OP, and part poses are
//! explained by per-part mixtures weighted by presence.
//!
//! Gradients are stopped on every OCAE input except the special features.

use rand::Rng;
use scae_core::geometry::{matrix_to_pose_t, pose_to_matrix_t, TransformMode};
use scae_core::nn::{MlpBank, SetTransformer, SetTransformerConfig};

use crate::capsules::{
    candidate_log_weights, lambda_activation, presence_from_logits, split_object_capsules,
    ObjectCapsules,
};
use crate::error::{Error, Result};
use crate::pcae::PartCapsules;
use crate::{ParamStore, Tape, TensorId};

const LOG_2PI: f64 = 1.8378770664093453;

/// Which 6-D space votes are compared to part poses in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteSpace {
    /// Decompose the vote matrix back into pose parameters.
    Pose,
    /// Compare the six free entries of the 3×3 matrices directly.
    Matrix,
}

#[derive(Debug, Clone)]
pub struct OcaeConfig {
    pub num_caps: usize,
    pub num_parts: usize,
    pub feature_dim: usize,
    pub st: SetTransformerConfig,
    pub decoder_hidden: Vec<usize>,
    pub vote_space: VoteSpace,
    pub deformations_on: bool,
    pub lambda_floor: f64,
    pub transform_mode: TransformMode,
    pub noise_in_object_caps: bool,
    /// Dimension of one part token: 6 + special_dim + template numel.
    pub token_dim: usize,
    pub special_dim: usize,
}

impl OcaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_caps == 0 || self.num_parts == 0 {
            return Err(Error::Config("ocae capsule/part counts must be positive".into()));
        }
        if self.st.num_seeds != self.num_caps {
            return Err(Error::Config("ocae set transformer seeds must equal num_caps".into()));
        }
        if self.st.output_dim != 7 + self.feature_dim {
            return Err(Error::Config("ocae set transformer output must be 6 + 1 + feature_dim".into()));
        }
        self.st.validate()?;
        Ok(())
    }
}

/// Per-(capsule, part) votes and their mixture parameters.
#[derive(Debug, Clone, Copy)]
pub struct PartVotes {
    /// `[B, K, M, 6]` votes in the configured comparison space.
    pub vote: TensorId,
    /// `[B, K, M]` conditional presences.
    pub presence: TensorId,
    /// `[B, K, M]` noisy conditional presence logits.
    pub presence_logit: TensorId,
    /// `[B, K, M]` isotropic standard deviations.
    pub lambda: TensorId,
    /// `[B, K, M, 9]` dynamic OP component (absent with deformations off).
    pub dynamic: Option<TensorId>,
}

/// Part likelihood plus the posterior presence tensor used by the sparsity
/// losses.
#[derive(Debug, Clone, Copy)]
pub struct PartLikelihood {
    pub loglik: TensorId,
    /// `[B, K, M]` unnormalized posterior presence a_k a_km N(x_m | ·).
    pub posterior: TensorId,
    pub degenerate: bool,
}

#[derive(Debug)]
pub struct Ocae {
    pub cfg: OcaeConfig,
    encoder: SetTransformer,
    decoder: MlpBank,
    op_static: String,
}

impl Ocae {
    pub fn init<R: Rng>(ps: &mut ParamStore, rng: &mut R, name: &str, cfg: OcaeConfig) -> Result<Self> {
        cfg.validate()?;
        let encoder = SetTransformer::init(ps, rng, &format!("{name}.enc"), cfg.token_dim, &cfg.st)?;
        let mut dims = vec![cfg.feature_dim];
        dims.extend(&cfg.decoder_hidden);
        dims.push(cfg.num_parts * 11);
        // Small head: votes start near the static OP geometry.
        let decoder = MlpBank::init(ps, rng, &format!("{name}.dec"), cfg.num_caps, &dims, 0.1)?;
        let op_static = format!("{name}.op_static");
        // Identity-biased static object-part relationships with noise to
        // break capsule symmetry.
        let mut init = Vec::with_capacity(cfg.num_caps * cfg.num_parts * 9);
        for _ in 0..cfg.num_caps * cfg.num_parts {
            let base = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
            for (i, b) in base.iter().enumerate() {
                let jitter = if i < 6 { rng.gen_range(-0.3..0.3) } else { 0.0 };
                init.push(b + jitter);
            }
        }
        ps.insert(&op_static, vec![cfg.num_caps, cfg.num_parts, 9], init)?;
        Ok(Ocae { cfg, encoder, decoder, op_static })
    }

    /// Assembles part tokens with stop-gradient on pose and template (the
    /// special features stay live) and encodes them into object capsules.
    /// The attention bias uses stop-gradded part presences.
    pub fn encode_objects<R: Rng>(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        parts: &PartCapsules,
        templates_combined: TensorId,
        noise: Option<&mut R>,
    ) -> Result<ObjectCapsules> {
        let b = t.shape(parts.pose)[0];
        let m = self.cfg.num_parts;
        let pose_sg = t.stop_grad(parts.pose);
        let tmpl_numel = t.value(templates_combined).len() / m;
        let flat = t.reshape(templates_combined, &[1, m, tmpl_numel])?;
        let flat = t.stop_grad(flat);
        let tmpl = t.broadcast_to(flat, &[b, m, tmpl_numel])?;
        let tokens = if self.cfg.special_dim > 0 {
            t.concat(&[pose_sg, parts.special, tmpl], 2)?
        } else {
            t.concat(&[pose_sg, tmpl], 2)?
        };
        let presence_sg = t.stop_grad(parts.presence);
        let encoded = self.encoder.forward(t, ps, tokens, Some(presence_sg))?;
        split_object_capsules(t, encoded, self.cfg.feature_dim, self.cfg.transform_mode, noise)
    }

    /// One vote per (object capsule, part): V_km = OV_k ∘ OP_km with
    /// OP = static + dynamic and the last row forced to [0, 0, 1].
    pub fn predict_part_votes<R: Rng>(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        caps: &ObjectCapsules,
        noise: Option<&mut R>,
    ) -> Result<PartVotes> {
        let (k, m) = (self.cfg.num_caps, self.cfg.num_parts);
        let b = t.shape(caps.features)[0];
        let raw = self.decoder.forward(t, ps, caps.features)?;
        let raw = t.reshape(raw, &[b, k, m, 11])?;
        let pres_logit = t.narrow(raw, 3, 9, 1)?;
        let pres_logit = t.reshape(pres_logit, &[b, k, m])?;
        let lam_raw = t.narrow(raw, 3, 10, 1)?;
        let lam_raw = t.reshape(lam_raw, &[b, k, m])?;

        let stat = t.leaf(&self.op_static, ps.get(&self.op_static)?);
        let stat = t.reshape(stat, &[1, k, m, 9])?;
        let (effective, dynamic) = if self.cfg.deformations_on {
            let dynamic = t.narrow(raw, 3, 0, 9)?;
            (t.add(stat, dynamic)?, Some(dynamic))
        } else {
            (t.broadcast_to(stat, &[b, k, m, 9])?, None)
        };
        // Last row pinned before composition.
        let top6 = t.narrow(effective, 3, 0, 6)?;
        let zeros = t.full(&[b, k, m, 2], 0.0);
        let ones = t.full(&[b, k, m, 1], 1.0);
        let op_flat = t.concat(&[top6, zeros, ones], 3)?;
        let op = t.reshape(op_flat, &[b, k, m, 3, 3])?;
        let ov = t.reshape(caps.ov, &[b, k, 1, 3, 3])?;
        let votes = t.matmul(ov, op)?;

        let vote = match self.cfg.vote_space {
            VoteSpace::Pose => matrix_to_pose_t(t, votes)?,
            VoteSpace::Matrix => {
                let flat = t.reshape(votes, &[b, k, m, 9])?;
                t.narrow(flat, 3, 0, 6)?
            }
        };
        let lambda = lambda_activation(t, lam_raw, self.cfg.lambda_floor);
        let (presence, presence_logit) = presence_from_logits(t, pres_logit, noise)?;
        Ok(PartVotes { vote, presence, presence_logit, lambda, dynamic })
    }

    /// Part-pose likelihood: per part, a K-component mixture of votes with
    /// normalized weights; each part's log-mixture is weighted by its
    /// presence d_m (absent parts contribute nothing). The pose target is
    /// stop-gradded.
    pub fn part_loglik(
        &self,
        t: &mut Tape,
        parts: &PartCapsules,
        caps: &ObjectCapsules,
        votes: &PartVotes,
    ) -> Result<PartLikelihood> {
        let (k, m) = (self.cfg.num_caps, self.cfg.num_parts);
        let b = t.shape(parts.pose)[0];
        let pose_sg = t.stop_grad(parts.pose);
        let target = match self.cfg.vote_space {
            VoteSpace::Pose => pose_sg,
            VoteSpace::Matrix => {
                let mm = pose_to_matrix_t(t, pose_sg, self.cfg.transform_mode)?;
                let flat = t.reshape(mm, &[b, m, 9])?;
                t.narrow(flat, 2, 0, 6)?
            }
        };
        let target = t.reshape(target, &[b, 1, m, 6])?;
        let diff = t.sub(target, votes.vote)?;
        let sq = t.mul(diff, diff)?;
        let d2 = t.sum_axes(sq, &[3], false)?; // [B, K, M]

        let log_lam = t.log(votes.lambda);
        let lam2 = t.mul(votes.lambda, votes.lambda)?;
        let lam2x2 = t.mul_scalar(lam2, 2.0);
        let maha = t.div(d2, lam2x2)?;
        let neg6loglam = t.mul_scalar(log_lam, -6.0);
        let peak = t.add_scalar(neg6loglam, -3.0 * LOG_2PI);
        let log_normal = t.sub(peak, maha)?; // [B, K, M]

        let (log_w, degenerate) =
            candidate_log_weights(t, caps.presence_logit, votes.presence_logit)?;
        let log_terms = t.add(log_w, log_normal)?;
        let logmix = t.log_sum_exp(log_terms, 1)?; // [B, M]
        let weighted = t.mul(logmix, parts.presence)?;
        let per_example = t.sum_axes(weighted, &[1], false)?;
        let loglik = t.mean_all(per_example)?;

        // Unnormalized posterior presence a_k a_km N(x_m | V).
        let log_a = t.log_sigmoid(caps.presence_logit);
        let log_a = t.reshape(log_a, &[b, k, 1])?;
        let log_akm = t.log_sigmoid(votes.presence_logit);
        let joint = t.add(log_a, log_akm)?;
        let joint = t.add(joint, log_normal)?;
        let posterior = t.exp(joint);
        Ok(PartLikelihood { loglik, posterior, degenerate })
    }

    /// Frobenius penalty on the dynamic OP components, averaged over the
    /// batch: `α · Σ_{k,m} ||OP_dyn||²_F`.
    pub fn deformation_penalty(&self, t: &mut Tape, votes: &PartVotes, alpha: f64) -> Result<TensorId> {
        match votes.dynamic {
            Some(dyn_op) => {
                let sq = t.mul(dyn_op, dyn_op)?;
                let per_example = t.sum_axes(sq, &[1, 2, 3], false)?;
                let mean = t.mean_all(per_example)?;
                Ok(t.mul_scalar(mean, alpha))
            }
            None => Ok(t.scalar(0.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng as ChaRng;
    use rand::SeedableRng;

    fn tiny_cfg(vote_space: VoteSpace, deformations_on: bool) -> OcaeConfig {
        OcaeConfig {
            num_caps: 2,
            num_parts: 3,
            feature_dim: 8,
            st: SetTransformerConfig {
                num_layers: 1,
                num_heads: 2,
                hidden_per_head: 6,
                ff_hidden: 0,
                output_dim: 15,
                num_seeds: 2,
            },
            decoder_hidden: vec![16],
            vote_space,
            deformations_on,
            lambda_floor: 0.01,
            transform_mode: TransformMode::Affine,
            noise_in_object_caps: true,
            token_dim: 6 + 4 + 8, // pose + special + 2x2x2 template
            special_dim: 4,
        }
    }

    fn fake_parts(t: &mut Tape, b: usize, m: usize, cz: usize, seed: u64) -> PartCapsules {
        let mut rng = ChaRng::seed_from_u64(seed);
        let pose = t
            .constant(&[b, m, 6], scae_core::nn::uniform_init(&mut rng, -0.4, 0.4, b * m * 6))
            .unwrap();
        let logit = t
            .constant(&[b, m], scae_core::nn::uniform_init(&mut rng, -1.0, 2.0, b * m))
            .unwrap();
        let presence = t.sigmoid(logit);
        let special = t
            .constant(&[b, m, cz], scae_core::nn::uniform_init(&mut rng, -1.0, 1.0, b * m * cz))
            .unwrap();
        PartCapsules { pose, presence, presence_logit: logit, special }
    }

    fn model(vote_space: VoteSpace, deform: bool) -> (Ocae, ParamStore) {
        let mut ps = ParamStore::new();
        let mut rng = ChaRng::seed_from_u64(55);
        let m = Ocae::init(&mut ps, &mut rng, "ocae", tiny_cfg(vote_space, deform)).unwrap();
        (m, ps)
    }

    fn fake_templates(t: &mut Tape) -> TensorId {
        let v: Vec<f64> = (0..3 * 2 * 2 * 2).map(|i| ((i * 29) % 10) as f64 / 10.0).collect();
        t.constant(&[3, 2, 2, 2], v).unwrap()
    }

    #[test]
    fn token_permutation_invariance() {
        let (model, ps) = model(VoteSpace::Pose, true);
        // Permuting parts permutes tokens and presences together; the
        // capsule outputs must not change.
        let run = |order: &[usize]| {
            let mut t = Tape::new();
            let parts = fake_parts(&mut t, 1, 3, 4, 77);
            let idx: Vec<usize> = order.to_vec();
            let pose = t.index_select(parts.pose, 1, &idx).unwrap();
            let logit = t.index_select(parts.presence_logit, 1, &idx).unwrap();
            let presence = t.sigmoid(logit);
            let special = t.index_select(parts.special, 1, &idx).unwrap();
            let tmpl = fake_templates(&mut t);
            let tmpl = t.index_select(tmpl, 0, &idx).unwrap();
            let permuted = PartCapsules { pose, presence, presence_logit: logit, special };
            let caps = model
                .encode_objects::<ChaRng>(&mut t, &ps, &permuted, tmpl, None)
                .unwrap();
            (t.value(caps.presence).to_vec(), t.value(caps.features).to_vec())
        };
        let base = run(&[0, 1, 2]);
        for order in [[1, 0, 2], [2, 1, 0], [1, 2, 0]] {
            let out = run(&order);
            for (a, b) in base.0.iter().zip(&out.0) {
                assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in base.1.iter().zip(&out.1) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn absent_part_token_content_is_ignored() {
        let (model, ps) = model(VoteSpace::Pose, true);
        let run = |bump: f64| {
            let mut t = Tape::new();
            let parts = fake_parts(&mut t, 1, 3, 4, 78);
            let logit = t.constant(&[1, 3], vec![2.0, -500.0, 1.0]).unwrap();
            let presence = t.sigmoid(logit);
            let delta = t.constant(&[1, 3, 4], {
                let mut v = vec![0.0; 12];
                v[4] = bump;
                v[5] = -bump;
                v
            }).unwrap();
            let special = t.add(parts.special, delta).unwrap();
            let tmpl = fake_templates(&mut t);
            let forced = PartCapsules { pose: parts.pose, presence, presence_logit: logit, special };
            let caps = model.encode_objects::<ChaRng>(&mut t, &ps, &forced, tmpl, None).unwrap();
            t.value(caps.features).to_vec()
        };
        let a = run(0.0);
        let b = run(0.8);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn votes_equal_static_op_under_identity_ov_and_zero_dynamics() {
        let (model, ps) = model(VoteSpace::Matrix, false);
        let mut t = Tape::new();
        // Identity OV via zero pose parameters.
        let pose0 = t.constant(&[1, 2, 6], vec![0.0; 12]).unwrap();
        let ov = pose_to_matrix_t(&mut t, pose0, TransformMode::Affine).unwrap();
        let feats = t.constant(&[1, 2, 8], vec![0.1; 16]).unwrap();
        let logit = t.constant(&[1, 2], vec![0.0; 2]).unwrap();
        let presence = t.sigmoid(logit);
        let caps = ObjectCapsules {
            pose_params: pose0,
            ov,
            features: feats,
            presence,
            presence_logit: logit,
        };
        let votes = model.predict_part_votes::<ChaRng>(&mut t, &ps, &caps, None).unwrap();
        assert!(votes.dynamic.is_none());
        let stat = &ps.get("ocae.op_static").unwrap().data;
        // Vote in matrix space = first six entries of OP static.
        for kk in 0..2 {
            for mm in 0..3 {
                for e in 0..6 {
                    let got = t.value(votes.vote)[((kk * 3) + mm) * 6 + e];
                    let want = stat[(kk * 3 + mm) * 9 + e];
                    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn votes_match_naive_matrix_product() {
        let (model, ps) = model(VoteSpace::Matrix, true);
        let mut t = Tape::new();
        let mut rng = ChaRng::seed_from_u64(4);
        let pose = t
            .constant(&[1, 2, 6], scae_core::nn::uniform_init(&mut rng, -0.5, 0.5, 12))
            .unwrap();
        let ov = pose_to_matrix_t(&mut t, pose, TransformMode::Affine).unwrap();
        let feats = t
            .constant(&[1, 2, 8], scae_core::nn::uniform_init(&mut rng, -1.0, 1.0, 16))
            .unwrap();
        let logit = t.constant(&[1, 2], vec![0.3, -0.2]).unwrap();
        let presence = t.sigmoid(logit);
        let caps = ObjectCapsules { pose_params: pose, ov, features: feats, presence, presence_logit: logit };
        let votes = model.predict_part_votes::<ChaRng>(&mut t, &ps, &caps, None).unwrap();

        // Rebuild OP = static + dynamic with forced last row; compare
        // OV·OP against a naive triple loop.
        let dynv = t.value(votes.dynamic.unwrap()).to_vec();
        let stat = ps.get("ocae.op_static").unwrap().data.clone();
        let ovv = t.value(caps.ov).to_vec();
        for kk in 0..2usize {
            for mm in 0..3usize {
                let mut op = [0.0f64; 9];
                for e in 0..9 {
                    op[e] = stat[(kk * 3 + mm) * 9 + e] + dynv[(kk * 3 + mm) * 9 + e];
                }
                op[6] = 0.0;
                op[7] = 0.0;
                op[8] = 1.0;
                let ovm = &ovv[kk * 9..(kk + 1) * 9];
                let mut want = [0.0f64; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        for l in 0..3 {
                            want[i * 3 + j] += ovm[i * 3 + l] * op[l * 3 + j];
                        }
                    }
                }
                for e in 0..6 {
                    let got = t.value(votes.vote)[((kk * 3) + mm) * 6 + e];
                    assert!((got - want[e]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn part_loglik_peak_is_six_dim_gaussian_peak() {
        // Exact vote, λ = 1, d = 1, single capsule and part:
        // log N peak = -3 log(2π) ≈ -5.513631.
        let cfg = OcaeConfig {
            num_caps: 1,
            num_parts: 1,
            token_dim: 6 + 4 + 8,
            ..tiny_cfg(VoteSpace::Pose, true)
        };
        let mut ps = ParamStore::new();
        let mut rng = ChaRng::seed_from_u64(1);
        let mut st_cfg = cfg.st.clone();
        st_cfg.num_seeds = 1;
        let cfg = OcaeConfig { st: st_cfg, ..cfg };
        let model = Ocae::init(&mut ps, &mut rng, "o", cfg).unwrap();
        let mut t = Tape::new();
        let pose_vals = vec![0.3, -0.1, 0.4, 0.0, 0.2, -0.2];
        let pose = t.constant(&[1, 1, 6], pose_vals.clone()).unwrap();
        let hi = t.constant(&[1, 1], vec![600.0]).unwrap();
        let d = t.sigmoid(hi);
        let parts = PartCapsules { pose, presence: d, presence_logit: hi, special: pose };
        let caps = ObjectCapsules {
            pose_params: pose,
            ov: pose,
            features: pose,
            presence: d,
            presence_logit: hi,
        };
        let vote = t.constant(&[1, 1, 1, 6], pose_vals).unwrap();
        let lam = t.constant(&[1, 1, 1], vec![1.0]).unwrap();
        let votes = PartVotes {
            vote,
            presence: d,
            presence_logit: t.reshape(hi, &[1, 1, 1]).unwrap(),
            lambda: lam,
            dynamic: None,
        };
        let lik = model.part_loglik(&mut t, &parts, &caps, &votes).unwrap();
        let expect = -3.0 * LOG_2PI;
        assert!(
            (t.value(lik.loglik)[0] - expect).abs() < 1e-9,
            "{} vs {expect}",
            t.value(lik.loglik)[0]
        );
    }

    #[test]
    fn part_loglik_matches_naive_summation_and_zero_presence_kills_terms() {
        let (model, ps) = model(VoteSpace::Pose, true);
        let mut t = Tape::new();
        let parts = fake_parts(&mut t, 2, 3, 4, 91);
        let tmpl = fake_templates(&mut t);
        let caps = model.encode_objects::<ChaRng>(&mut t, &ps, &parts, tmpl, None).unwrap();
        let votes = model.predict_part_votes::<ChaRng>(&mut t, &ps, &caps, None).unwrap();
        let lik = model.part_loglik(&mut t, &parts, &caps, &votes).unwrap();

        // Naive oracle in probability domain.
        let (k, m) = (2usize, 3usize);
        let a = t.value(caps.presence).to_vec();
        let akm = t.value(votes.presence).to_vec();
        let lam = t.value(votes.lambda).to_vec();
        let vote = t.value(votes.vote).to_vec();
        let pose = t.value(parts.pose).to_vec();
        let d = t.value(parts.presence).to_vec();
        let mut total = 0.0;
        for b in 0..2 {
            let mut denom = 0.0;
            for i in 0..k {
                for j in 0..m {
                    denom += a[b * k + i] * akm[(b * k + i) * m + j];
                }
            }
            for mi in 0..m {
                let mut s = 0.0;
                for ki in 0..k {
                    let c = (b * k + ki) * m + mi;
                    let w = a[b * k + ki] * akm[c] / denom;
                    let mut d2 = 0.0;
                    for e in 0..6 {
                        let diff = pose[(b * m + mi) * 6 + e] - vote[c * 6 + e];
                        d2 += diff * diff;
                    }
                    let var = lam[c] * lam[c];
                    let dens = (-d2 / (2.0 * var)).exp()
                        / (2.0 * std::f64::consts::PI * var).powi(3);
                    s += w * dens;
                }
                total += d[b * m + mi] * s.ln();
            }
        }
        total /= 2.0;
        assert!(
            (t.value(lik.loglik)[0] - total).abs() < 1e-9,
            "{} vs naive {total}",
            t.value(lik.loglik)[0]
        );

        // All d = 0: the likelihood is an empty product.
        let mut t2 = Tape::new();
        let parts2 = fake_parts(&mut t2, 1, 3, 4, 92);
        let zero_logit = t2.constant(&[1, 3], vec![-600.0; 3]).unwrap();
        let zero_d = t2.sigmoid(zero_logit);
        let forced = PartCapsules {
            pose: parts2.pose,
            presence: zero_d,
            presence_logit: zero_logit,
            special: parts2.special,
        };
        let tmpl2 = fake_templates(&mut t2);
        let caps2 = model.encode_objects::<ChaRng>(&mut t2, &ps, &forced, tmpl2, None).unwrap();
        let votes2 = model.predict_part_votes::<ChaRng>(&mut t2, &ps, &caps2, None).unwrap();
        let lik2 = model.part_loglik(&mut t2, &forced, &caps2, &votes2).unwrap();
        assert!(t2.value(lik2.loglik)[0].abs() < 1e-9);
    }

    #[test]
    fn stop_gradient_pattern_holds() {
        // Gradients flow into special features but not into part poses,
        // part presences (as encoder inputs), or the template values.
        let (model, ps) = model(VoteSpace::Pose, true);
        let mut t = Tape::new();
        let mut rng = ChaRng::seed_from_u64(6);
        let pose_p = crate::Param::new(
            vec![1, 3, 6],
            scae_core::nn::uniform_init(&mut rng, -0.4, 0.4, 18),
        );
        let pose = t.leaf("in.pose", &pose_p);
        let logit_p = crate::Param::new(vec![1, 3], vec![0.5, 1.0, -0.3]);
        let logit = t.leaf("in.logit", &logit_p);
        let presence = t.sigmoid(logit);
        let special_p = crate::Param::new(
            vec![1, 3, 4],
            scae_core::nn::uniform_init(&mut rng, -1.0, 1.0, 12),
        );
        let special = t.leaf("in.special", &special_p);
        let tmpl_p = crate::Param::new(
            vec![3, 2, 2, 2],
            scae_core::nn::uniform_init(&mut rng, 0.1, 0.9, 24),
        );
        let tmpl = t.leaf("in.templates", &tmpl_p);
        let parts = PartCapsules { pose, presence, presence_logit: logit, special };
        let caps = model.encode_objects::<ChaRng>(&mut t, &ps, &parts, tmpl, None).unwrap();
        let votes = model.predict_part_votes::<ChaRng>(&mut t, &ps, &caps, None).unwrap();
        let lik = model.part_loglik(&mut t, &parts, &caps, &votes).unwrap();
        let loss = t.neg(lik.loglik);
        t.backward(loss).unwrap();

        assert!(t.grad(pose).is_none(), "pose must be stop-gradded");
        assert!(t.grad(tmpl).is_none(), "templates must be stop-gradded");
        let zg = t.grad(special).expect("special features take gradient");
        assert!(zg.iter().any(|&g| g.abs() > 1e-12), "special-feature gradient vanished");
    }

    #[test]
    fn deformation_penalty_hand_values() {
        let (model, _) = model(VoteSpace::Pose, true);
        let mut t = Tape::new();
        let zeros = t.constant(&[1, 2, 3, 9], vec![0.0; 54]).unwrap();
        let votes = PartVotes {
            vote: zeros,
            presence: zeros,
            presence_logit: zeros,
            lambda: zeros,
            dynamic: Some(zeros),
        };
        let p = model.deformation_penalty(&mut t, &votes, 10.0).unwrap();
        assert_eq!(t.value(p)[0], 0.0);

        let mut one = vec![0.0; 54];
        one[13] = 1.0;
        let dynv = t.constant(&[1, 2, 3, 9], one).unwrap();
        let votes = PartVotes { dynamic: Some(dynv), ..votes };
        let p = model.deformation_penalty(&mut t, &votes, 10.0).unwrap();
        assert_eq!(t.value(p)[0], 10.0);

        // Random tensor matches a plain square-sum oracle.
        let mut rng = ChaRng::seed_from_u64(13);
        let vals = scae_core::nn::uniform_init::<f64, _>(&mut rng, -1.0, 1.0, 54);
        let dynv = t.constant(&[1, 2, 3, 9], vals.clone()).unwrap();
        let votes = PartVotes { dynamic: Some(dynv), ..votes };
        let p = model.deformation_penalty(&mut t, &votes, 2.5).unwrap();
        let want: f64 = 2.5 * vals.iter().map(|v| v * v).sum::<f64>();
        assert!((t.value(p)[0] - want).abs() < 1e-9);
    }

    #[test]
    fn pose_space_vote_round_trips_through_decomposition() {
        // A vote built from an actual pose decomposes back to that pose.
        let mut t = Tape::new();
        let pose_vals = vec![0.2, -0.3, 0.8, 0.15, 0.4, -0.6];
        let pose = t.constant(&[1, 1, 1, 6], pose_vals.clone()).unwrap();
        let m = pose_to_matrix_t(&mut t, pose, TransformMode::Affine).unwrap();
        let back = matrix_to_pose_t(&mut t, m).unwrap();
        for (a, b) in t.value(back).iter().zip(&pose_vals) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
