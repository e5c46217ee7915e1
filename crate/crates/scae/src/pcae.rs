//! Part capsule autoencoder: a CNN encoder infers per-part poses, presences
//! and special features from an image; learned templates are warped by the
//! poses and mixed into a spatial Gaussian mixture that reconstructs the
//! image.

use rand::Rng;
use scae_core::geometry::{warp_template, TransformMode};
use scae_core::nn::{attention_pool, CnnConfig, CnnEncoder, Linear, Mlp};

use crate::capsules::presence_from_logits;
use crate::error::{Error, Result};
use crate::{ParamStore, Tape, TensorId};

const LOG_2PI: f64 = 1.8378770664093453;
/// Mixing-weight floor: uncovered pixels fall back to a uniform mixture.
const WEIGHT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderVariant {
    /// CNN followed by per-capsule attention pooling.
    Attention,
    /// CNN flattened into a fully-connected head.
    Linear,
    /// Per-parameter feature maps with global average pooling.
    Conv,
}

#[derive(Debug, Clone)]
pub struct PcaeConfig {
    pub num_templates: usize,
    pub template_size: usize,
    pub image_channels: usize,
    pub image_hw: (usize, usize),
    pub cnn: CnnConfig,
    pub special_dim: usize,
    pub variant: EncoderVariant,
    pub sigma_y: f64,
    pub color_hidden: usize,
    pub tie_color_alpha: bool,
    pub transform_mode: TransformMode,
    pub noise_in_part_caps: bool,
}

impl PcaeConfig {
    pub fn params_per_capsule(&self) -> usize {
        6 + 1 + self.special_dim
    }

    pub fn template_channels(&self) -> usize {
        if self.tie_color_alpha {
            self.image_channels
        } else {
            self.image_channels + 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_templates == 0 || self.template_size == 0 || self.image_channels == 0 {
            return Err(Error::Config("pcae sizes must be positive".into()));
        }
        if self.sigma_y <= 0.0 {
            return Err(Error::Config("sigma_y must be positive".into()));
        }
        self.cnn.validate()?;
        Ok(())
    }
}

/// Encoder output: per-part pose parameters, presence, special features.
#[derive(Debug, Clone, Copy)]
pub struct PartCapsules {
    /// `[B, M, 6]`
    pub pose: TensorId,
    /// `[B, M]` presence probabilities.
    pub presence: TensorId,
    /// `[B, M]` noisy presence logits.
    pub presence_logit: TensorId,
    /// `[B, M, cz]` special features (zero-width when disabled).
    pub special: TensorId,
}

/// Spatial mixture over pixels.
#[derive(Debug, Clone, Copy)]
pub struct PixelMixture {
    /// `[B, M, P]` normalized log mixing weights (sum to 1 over M).
    pub log_weight: TensorId,
    /// `[B, M, P, c]` component means.
    pub mean: TensorId,
    /// `[B, M, P]` warped alpha channels (pre-normalization).
    pub alpha: TensorId,
    /// Fraction of pixels no template covers beyond the ε floor.
    pub uncovered_fraction: f64,
}

#[derive(Debug)]
pub struct Pcae {
    pub cfg: PcaeConfig,
    cnn: CnnEncoder,
    head: Linear,
    color: Option<Mlp>,
    templates: String,
    /// Added to raw pose outputs so a zero output places a template at its
    /// native pixel scale on the canvas.
    pose_bias: Vec<f64>,
}

impl Pcae {
    pub fn init<R: Rng>(ps: &mut ParamStore, rng: &mut R, name: &str, cfg: PcaeConfig) -> Result<Self> {
        cfg.validate()?;
        let cnn = CnnEncoder::init(ps, rng, &format!("{name}.cnn"), cfg.image_channels, &cfg.cnn)?;
        let feat = cfg.cnn.output_channels();
        let (eh, ew) = cfg.cnn.output_hw(cfg.image_hw.0, cfg.image_hw.1);
        let p = cfg.params_per_capsule();
        let head = match cfg.variant {
            EncoderVariant::Attention => Linear::init_scaled(
                ps,
                rng,
                &format!("{name}.head"),
                feat,
                cfg.num_templates * (p + 1),
                true,
                0.5,
            )?,
            EncoderVariant::Linear => Linear::init_scaled(
                ps,
                rng,
                &format!("{name}.head"),
                eh * ew * feat,
                cfg.num_templates * p,
                true,
                0.5,
            )?,
            EncoderVariant::Conv => Linear::init_scaled(
                ps,
                rng,
                &format!("{name}.head"),
                feat,
                cfg.num_templates * p,
                true,
                0.5,
            )?,
        };
        let color = if cfg.special_dim > 0 {
            Some(Mlp::init(
                ps,
                rng,
                &format!("{name}.color"),
                &[cfg.special_dim, cfg.color_hidden, cfg.image_channels],
            )?)
        } else {
            None
        };
        let templates = format!("{name}.templates");
        let tc = cfg.template_channels();
        let n = cfg.num_templates * cfg.template_size * cfg.template_size * tc;
        ps.insert(
            &templates,
            vec![cfg.num_templates, cfg.template_size, cfg.template_size, tc],
            scae_core::nn::uniform_init(rng, -1.0, 1.0, n),
        )?;
        let scale_bias = (cfg.template_size as f64 / cfg.image_hw.0 as f64).ln();
        Ok(Pcae {
            cfg,
            cnn,
            head,
            color,
            templates,
            pose_bias: vec![scale_bias, scale_bias, 0.0, 0.0, 0.0, 0.0],
        })
    }

    /// Infers part capsule parameters from `images [B, h, w, c]`.
    pub fn encode_parts<R: Rng>(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        images: TensorId,
        noise: Option<&mut R>,
    ) -> Result<PartCapsules> {
        let b = t.shape(images)[0];
        let m = self.cfg.num_templates;
        let p = self.cfg.params_per_capsule();
        let feats = self.cnn.forward(t, ps, images)?;
        let fsh = t.shape(feats).to_vec();
        let (eh, ew, fch) = (fsh[1], fsh[2], fsh[3]);
        let s = eh * ew;
        let flat = t.reshape(feats, &[b, s, fch])?;
        let pooled = match self.cfg.variant {
            EncoderVariant::Attention => {
                let maps = self.head.forward(t, ps, flat)?; // [B, S, M*(p+1)]
                let maps = t.reshape(maps, &[b, s, m, p + 1])?;
                let maps = t.permute(maps, &[0, 2, 1, 3])?; // [B, M, S, p+1]
                attention_pool(t, maps)?
            }
            EncoderVariant::Linear => {
                let whole = t.reshape(flat, &[b, s * fch])?;
                let out = self.head.forward(t, ps, whole)?;
                t.reshape(out, &[b, m, p])?
            }
            EncoderVariant::Conv => {
                let maps = self.head.forward(t, ps, flat)?; // [B, S, M*p]
                let maps = t.reshape(maps, &[b, s, m * p])?;
                let pooled = t.mean_axes(maps, &[1], false)?;
                t.reshape(pooled, &[b, m, p])?
            }
        };
        let pose_raw = t.narrow(pooled, 2, 0, 6)?;
        let bias = t.constant(&[1, 1, 6], self.pose_bias.clone())?;
        let pose = t.add(pose_raw, bias)?;
        let logit = t.narrow(pooled, 2, 6, 1)?;
        let logit = t.reshape(logit, &[b, m])?;
        let special = t.narrow(pooled, 2, 7, self.cfg.special_dim)?;
        let (presence, presence_logit) = presence_from_logits(t, logit, noise)?;
        Ok(PartCapsules { pose, presence, presence_logit, special })
    }

    /// Sigmoid-stored templates as `[M, ht, wt, c+1]` (colors then alpha).
    /// With tied color/alpha the alpha channel is the channel mean of the
    /// colors.
    pub fn templates_combined(&self, t: &mut Tape, ps: &ParamStore) -> Result<TensorId> {
        let raw = t.leaf(&self.templates, ps.get(&self.templates)?);
        let sig = t.sigmoid(raw);
        if self.cfg.tie_color_alpha {
            let alpha = t.mean_axes(sig, &[3], true)?;
            Ok(t.concat(&[sig, alpha], 3)?)
        } else {
            Ok(sig)
        }
    }

    /// Warps every template by its part pose and normalizes the mixing
    /// weights `d_m · alpha` per pixel with an ε floor.
    pub fn render_mixture(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        parts: &PartCapsules,
    ) -> Result<PixelMixture> {
        let (oh, ow) = self.cfg.image_hw;
        let m = self.cfg.num_templates;
        let c = self.cfg.image_channels;
        let b = t.shape(parts.pose)[0];
        let combined = self.templates_combined(t, ps)?;
        let ht = self.cfg.template_size;

        let mut warped_parts = Vec::with_capacity(m);
        for mi in 0..m {
            let tm = t.narrow(combined, 0, mi, 1)?;
            let tm = t.reshape(tm, &[ht, ht, c + 1])?;
            let pose_m = t.narrow(parts.pose, 1, mi, 1)?;
            let pose_m = t.reshape(pose_m, &[b, 6])?;
            let w = warp_template(t, tm, pose_m, self.cfg.transform_mode, oh, ow)?;
            warped_parts.push(t.reshape(w, &[b, 1, oh * ow, c + 1])?);
        }
        let warped = t.concat(&warped_parts, 1)?; // [B, M, P, c+1]
        let colors = t.narrow(warped, 3, 0, c)?;
        let alpha = t.narrow(warped, 3, c, 1)?;
        let p = oh * ow;
        let alpha = t.reshape(alpha, &[b, m, p])?;

        let mean = match &self.color {
            Some(mlp) => {
                let raw = mlp.forward(t, ps, parts.special)?;
                let cm = t.sigmoid(raw); // [B, M, c]
                let cm = t.reshape(cm, &[b, m, 1, c])?;
                t.mul(colors, cm)?
            }
            None => colors,
        };

        // Floor on the alpha channel, inside the product with d: mixing
        // weights stay exactly proportional to part presence, so an absent
        // part contributes nothing no matter where its template moved.
        let d = t.reshape(parts.presence, &[b, m, 1])?;
        let floored_alpha = t.add_scalar(alpha, WEIGHT_EPS);
        let wtil = t.mul(floored_alpha, d)?;
        let norm = t.sum_axes(wtil, &[1], true)?;
        let norm = t.clamp_min(norm, 1e-30);
        let weights = t.div(wtil, norm)?;
        let safe = t.clamp_min(weights, 1e-300);
        let log_weight = t.log(safe);

        // Coverage metric: pixels where every template contributes only the
        // floor.
        let a_vals = t.value(alpha);
        let d_vals = t.value(parts.presence);
        let mut uncovered = 0usize;
        for bi in 0..b {
            for pi in 0..p {
                let mut mx: f64 = 0.0;
                for mi in 0..m {
                    mx = mx.max(a_vals[(bi * m + mi) * p + pi] * d_vals[bi * m + mi]);
                }
                if mx < WEIGHT_EPS {
                    uncovered += 1;
                }
            }
        }
        Ok(PixelMixture {
            log_weight,
            mean,
            alpha,
            uncovered_fraction: uncovered as f64 / (b * p) as f64,
        })
    }
}

/// Image log-likelihood under the pixel mixture, averaged over the batch:
/// per pixel, log Σ_m p_m N(y | mean_m, σ_y²) with the density taken per
/// channel.
pub fn image_loglik(
    t: &mut Tape,
    images: TensorId,
    mixture: &PixelMixture,
    sigma_y: f64,
) -> Result<TensorId> {
    let ish = t.shape(images).to_vec();
    let (b, c) = (ish[0], ish[3]);
    let p = ish[1] * ish[2];
    let y = t.reshape(images, &[b, 1, p, c])?;
    let diff = t.sub(y, mixture.mean)?;
    let sq = t.mul(diff, diff)?;
    let d2 = t.sum_axes(sq, &[3], false)?; // [B, M, P]
    let scaled = t.mul_scalar(d2, -1.0 / (2.0 * sigma_y * sigma_y));
    let peak = c as f64 * (-0.5) * (LOG_2PI + 2.0 * sigma_y.ln());
    let log_normal = t.add_scalar(scaled, peak);
    let logits = t.add(mixture.log_weight, log_normal)?;
    let per_pixel = t.log_sum_exp(logits, 1)?; // [B, P]
    let per_image = t.sum_axes(per_pixel, &[1], false)?;
    Ok(t.mean_all(per_image)?)
}

/// Sobel preprocessing on raw pixel buffers `[n, h, w, c]`: gradient
/// magnitude per channel (replicate padding at the border), per-image
/// median subtraction, absolute value, min-max normalization to [0, 1].
/// Constant images come back all zero.
pub fn sobel_preprocess(images: &[f64], n: usize, h: usize, w: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; images.len()];
    let px = |img: &[f64], y: isize, x: isize, ch: usize| -> f64 {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        img[(y * w + x) * c + ch]
    };
    for ni in 0..n {
        let img = &images[ni * h * w * c..(ni + 1) * h * w * c];
        let mag = &mut out[ni * h * w * c..(ni + 1) * h * w * c];
        for y in 0..h as isize {
            for x in 0..w as isize {
                for ch in 0..c {
                    let gx = -px(img, y - 1, x - 1, ch) + px(img, y - 1, x + 1, ch)
                        - 2.0 * px(img, y, x - 1, ch)
                        + 2.0 * px(img, y, x + 1, ch)
                        - px(img, y + 1, x - 1, ch)
                        + px(img, y + 1, x + 1, ch);
                    let gy = -px(img, y - 1, x - 1, ch) - 2.0 * px(img, y - 1, x, ch)
                        - px(img, y - 1, x + 1, ch)
                        + px(img, y + 1, x - 1, ch)
                        + 2.0 * px(img, y + 1, x, ch)
                        + px(img, y + 1, x + 1, ch);
                    mag[(y as usize * w + x as usize) * c + ch] = (gx * gx + gy * gy).sqrt();
                }
            }
        }
        // Median over the whole image, then |x - median|, then min-max.
        let mut sorted: Vec<f64> = mag.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in mag.iter_mut() {
            *v = (*v - median).abs();
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        let range = hi - lo;
        if range < 1e-12 {
            mag.fill(0.0);
        } else {
            for v in mag.iter_mut() {
                *v = (*v - lo) / range;
            }
        }
    }
    out
}
