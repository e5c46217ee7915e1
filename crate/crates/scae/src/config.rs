//! Run configuration: a plain-text `key = value` format covering model
//! architecture, optimizer schedule, loss weights, and ablation switches.
//!
//! Grammar: one `key = value` pair per line; blank lines and lines starting
//! with `#` are ignored. Unknown keys and out-of-range values are rejected
//! at load time. `to_canonical_string` serializes every field in a fixed
//! order, which is what checkpoints embed.

use std::fmt::Write as _;
use std::path::Path;

use scae_core::geometry::TransformMode;
use scae_core::nn::{CnnConfig, SetTransformerConfig};

use crate::ccae::CcaeConfig;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::ocae::{OcaeConfig, VoteSpace};
use crate::pcae::{EncoderVariant, PcaeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Ccae,
    Scae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Constellation,
    Mnist,
    Mnist40,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Model,
    pub dataset: Dataset,
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Exponential decay factor; 1.0 disables decay.
    pub decay_rate: f64,
    /// Steps per decay application; 0 disables decay.
    pub decay_steps: usize,
    pub rms_decay: f64,
    pub momentum: f64,

    // Object-capsule encoder/decoder (CCAE and OCAE share the layout).
    pub num_capsules: usize,
    pub num_candidates: usize,
    pub feature_dim: usize,
    pub st_layers: usize,
    pub st_heads: usize,
    pub st_hidden_per_head: usize,
    pub st_ff_hidden: usize,
    pub decoder_hidden: Vec<usize>,
    pub num_classes: usize,
    pub lambda_floor: f64,

    // Part capsules (image models).
    pub num_templates: usize,
    pub template_size: usize,
    pub part_cnn: Vec<(usize, usize)>,
    pub special_features: usize,
    pub encoder_variant: EncoderVariant,
    pub sigma_y: f64,
    pub color_hidden: usize,
    pub tie_color_alpha: bool,
    pub sobel_target: bool,

    // Loss weights (hyperparameter-table names).
    pub part_ll_weight: f64,
    pub image_ll_weight: f64,
    pub prior_within_sparsity: f64,
    pub prior_between_sparsity: f64,
    pub posterior_within_sparsity: f64,
    pub posterior_between_sparsity: f64,
    pub too_few_active_capsules: f64,
    pub deformation_alpha: f64,

    // Ablation switches.
    pub similarity_transforms: bool,
    pub deformations_on: bool,
    pub noise_in_part_caps: bool,
    pub noise_in_object_caps: bool,
    pub prior_sparsity_on: bool,
    pub posterior_sparsity_on: bool,
    pub special_features_on: bool,
    pub posterior_prose_reading: bool,
    pub vote_space: VoteSpace,

    // Data.
    pub mnist_images: String,
    pub mnist_labels: String,
    pub canvas_size: usize,
    pub max_shift: usize,

    // Schedule.
    pub eval_every: usize,
    pub eval_examples: usize,
    pub checkpoint_every: usize,
}

impl RunConfig {
    /// Constellation model with the published architecture and weights:
    /// 4×(4 heads, 128/head) encoder, 3 capsules × 4 candidates, batch 64,
    /// learning rate 1e-5 without decay.
    pub fn constellation_paper() -> Self {
        RunConfig {
            model: Model::Ccae,
            dataset: Dataset::Constellation,
            seed: 0,
            steps: 300_000,
            batch_size: 64,
            learning_rate: 1e-5,
            decay_rate: 1.0,
            decay_steps: 0,
            rms_decay: 0.9,
            momentum: 0.9,
            num_capsules: 3,
            num_candidates: 4,
            feature_dim: 32,
            st_layers: 4,
            st_heads: 4,
            st_hidden_per_head: 128,
            st_ff_hidden: 0,
            decoder_hidden: vec![128, 128],
            num_classes: 3,
            lambda_floor: 0.01,
            num_templates: 24,
            template_size: 11,
            part_cnn: vec![(128, 2), (128, 2), (128, 1), (128, 1)],
            special_features: 16,
            encoder_variant: EncoderVariant::Attention,
            sigma_y: 0.25,
            color_hidden: 32,
            tie_color_alpha: false,
            sobel_target: false,
            part_ll_weight: 1.0,
            image_ll_weight: 0.0,
            prior_within_sparsity: 1.0,
            prior_between_sparsity: 1.0,
            posterior_within_sparsity: 0.0,
            posterior_between_sparsity: 0.0,
            too_few_active_capsules: 10.0,
            deformation_alpha: 10.0,
            similarity_transforms: false,
            deformations_on: true,
            noise_in_part_caps: true,
            noise_in_object_caps: true,
            prior_sparsity_on: true,
            posterior_sparsity_on: true,
            special_features_on: true,
            posterior_prose_reading: false,
            vote_space: VoteSpace::Pose,
            mnist_images: "data/mnist/mnist10k-images-idx3-ubyte".to_string(),
            mnist_labels: "data/mnist/mnist10k-labels-idx1-ubyte".to_string(),
            canvas_size: 40,
            max_shift: 6,
            eval_every: 1000,
            eval_examples: 1000,
            checkpoint_every: 10_000,
        }
    }

    /// Reduced constellation profile: 2-layer narrow encoder, larger
    /// learning rate, a 50k-step budget. Runs on a desktop CPU.
    pub fn constellation_reduced() -> Self {
        RunConfig {
            steps: 50_000,
            learning_rate: 3e-4,
            st_layers: 2,
            st_heads: 4,
            st_hidden_per_head: 16,
            decoder_hidden: vec![64, 64],
            eval_every: 500,
            eval_examples: 500,
            checkpoint_every: 10_000,
            ..Self::constellation_paper()
        }
    }

    /// Image model with the published MNIST architecture: 24 templates of
    /// 11×11, 24 object capsules, the 2x(128:2)-2x(128:1) part CNN and the
    /// 3x(1-16)-256 object encoder, batch 128, learning rate 1e-5.
    pub fn mnist_paper() -> Self {
        RunConfig {
            model: Model::Scae,
            dataset: Dataset::Mnist,
            steps: 300_000,
            batch_size: 128,
            num_capsules: 24,
            num_candidates: 24,
            feature_dim: 249,
            st_layers: 3,
            st_heads: 1,
            st_hidden_per_head: 16,
            decoder_hidden: vec![128, 128],
            num_classes: 10,
            image_ll_weight: 1.0,
            posterior_within_sparsity: 10.0,
            posterior_between_sparsity: 10.0,
            too_few_active_capsules: 0.0,
            eval_every: 2000,
            eval_examples: 1000,
            checkpoint_every: 20_000,
            ..Self::constellation_paper()
        }
    }

    /// Desk-scale image profile: the published template/capsule counts and
    /// loss weights with a narrow CNN and a 20k-step budget over the 10k
    /// image subset.
    pub fn mnist_desk() -> Self {
        RunConfig {
            steps: 20_000,
            batch_size: 32,
            learning_rate: 1e-4,
            part_cnn: vec![(32, 2), (32, 2), (32, 1), (32, 1)],
            feature_dim: 32,
            eval_every: 1000,
            eval_examples: 1000,
            checkpoint_every: 5000,
            ..Self::mnist_paper()
        }
    }

    /// Desk profile over the padded-and-translated 40×40 canvas.
    pub fn mnist40_desk() -> Self {
        RunConfig { dataset: Dataset::Mnist40, ..Self::mnist_desk() }
    }

    pub fn transform_mode(&self) -> TransformMode {
        if self.similarity_transforms {
            TransformMode::Similarity
        } else {
            TransformMode::Affine
        }
    }

    pub fn image_hw(&self) -> (usize, usize) {
        match self.dataset {
            Dataset::Mnist => (28, 28),
            Dataset::Mnist40 => (self.canvas_size, self.canvas_size),
            Dataset::Constellation => (0, 0),
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            part_ll: self.part_ll_weight,
            image_ll: self.image_ll_weight,
            prior_within: if self.prior_sparsity_on { self.prior_within_sparsity } else { 0.0 },
            prior_between: if self.prior_sparsity_on { self.prior_between_sparsity } else { 0.0 },
            posterior_within: if self.posterior_sparsity_on {
                self.posterior_within_sparsity
            } else {
                0.0
            },
            posterior_between: if self.posterior_sparsity_on {
                self.posterior_between_sparsity
            } else {
                0.0
            },
            too_few_active: self.too_few_active_capsules,
            deformation_alpha: self.deformation_alpha,
        }
    }

    pub fn ccae_config(&self) -> CcaeConfig {
        CcaeConfig {
            num_caps: self.num_capsules,
            num_candidates: self.num_candidates,
            feature_dim: self.feature_dim,
            st: SetTransformerConfig {
                num_layers: self.st_layers,
                num_heads: self.st_heads,
                hidden_per_head: self.st_hidden_per_head,
                ff_hidden: self.st_ff_hidden,
                output_dim: 7 + self.feature_dim,
                num_seeds: self.num_capsules,
            },
            decoder_hidden: self.decoder_hidden.clone(),
            transform_mode: self.transform_mode(),
            lambda_floor: self.lambda_floor,
            noise_in_object_caps: self.noise_in_object_caps,
        }
    }

    pub fn special_dim(&self) -> usize {
        if self.special_features_on {
            self.special_features
        } else {
            0
        }
    }

    pub fn pcae_config(&self) -> PcaeConfig {
        PcaeConfig {
            num_templates: self.num_templates,
            template_size: self.template_size,
            image_channels: 1,
            image_hw: self.image_hw(),
            cnn: CnnConfig { layers: self.part_cnn.clone() },
            special_dim: self.special_dim(),
            variant: self.encoder_variant,
            sigma_y: self.sigma_y,
            color_hidden: self.color_hidden,
            tie_color_alpha: self.tie_color_alpha,
            transform_mode: self.transform_mode(),
            noise_in_part_caps: self.noise_in_part_caps,
        }
    }

    pub fn ocae_config(&self) -> OcaeConfig {
        let pc = self.pcae_config();
        let token_dim = 6 + self.special_dim()
            + self.template_size * self.template_size * (pc.image_channels + 1);
        OcaeConfig {
            num_caps: self.num_capsules,
            num_parts: self.num_templates,
            feature_dim: self.feature_dim,
            st: SetTransformerConfig {
                num_layers: self.st_layers,
                num_heads: self.st_heads,
                hidden_per_head: self.st_hidden_per_head,
                ff_hidden: self.st_ff_hidden,
                output_dim: 7 + self.feature_dim,
                num_seeds: self.num_capsules,
            },
            decoder_hidden: self.decoder_hidden.clone(),
            vote_space: self.vote_space,
            deformations_on: self.deformations_on,
            lambda_floor: self.lambda_floor,
            transform_mode: self.transform_mode(),
            noise_in_object_caps: self.noise_in_object_caps,
            token_dim,
            special_dim: self.special_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if self.steps == 0 || self.batch_size == 0 {
            return err("steps and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.decay_rate) || self.decay_rate == 0.0 {
            return err("decay_rate must be in (0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.rms_decay) || !(0.0..1.0).contains(&self.momentum) {
            return err("rms_decay and momentum must be in [0, 1)".into());
        }
        if self.num_capsules == 0 || self.num_candidates == 0 || self.feature_dim == 0 {
            return err("capsule dimensions must be positive".into());
        }
        if self.num_classes == 0 {
            return err("num_classes must be positive".into());
        }
        if self.lambda_floor <= 0.0 {
            return err("lambda_floor must be positive".into());
        }
        if self.sigma_y <= 0.0 {
            return err("sigma_y must be positive".into());
        }
        for &(c, s) in &self.part_cnn {
            if c == 0 || !(s == 1 || s == 2) {
                return err(format!("part_cnn entry {c}:{s} invalid; stride must be 1 or 2"));
            }
        }
        if self.eval_every == 0 || self.checkpoint_every == 0 || self.eval_examples == 0 {
            return err("schedule intervals must be positive".into());
        }
        match (self.model, self.dataset) {
            (Model::Ccae, Dataset::Constellation) => {}
            (Model::Scae, Dataset::Mnist | Dataset::Mnist40) => {}
            (m, d) => return err(format!("model {m:?} cannot train on dataset {d:?}")),
        }
        if self.dataset == Dataset::Mnist40 {
            let inner = 28 + 2 * self.max_shift;
            if self.canvas_size < inner {
                return err(format!(
                    "canvas_size {} too small for 28px digits shifted by ±{}",
                    self.canvas_size, self.max_shift
                ));
            }
        }
        if self.model == Model::Ccae {
            self.ccae_config().validate()?;
        } else {
            self.pcae_config().validate()?;
            self.ocae_config().validate()?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_checked(&text)
    }

    pub fn from_str_checked(text: &str) -> Result<Self> {
        let mut cfg = Self::constellation_paper();
        let mut saw_model = false;
        // First pass only picks the model/dataset so profile-dependent
        // defaults land right.
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = split_kv(line)?;
            if k == "model" {
                saw_model = true;
                cfg = match v {
                    "ccae" => Self::constellation_paper(),
                    "scae" => Self::mnist_paper(),
                    other => return Err(Error::Config(format!("unknown model `{other}`"))),
                };
            }
        }
        if !saw_model {
            return Err(Error::Config("config must set `model = ccae|scae`".into()));
        }
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = split_kv(line)?;
            cfg.apply(k, v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("cannot parse `{v}` for key `{key}`")))
        }
        fn pb(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::Config(format!("cannot parse `{v}` as bool for key `{key}`"))),
            }
        }
        match key {
            "model" => {
                self.model = match value {
                    "ccae" => Model::Ccae,
                    "scae" => Model::Scae,
                    _ => return Err(Error::Config(format!("unknown model `{value}`"))),
                }
            }
            "dataset" => {
                self.dataset = match value {
                    "constellation" => Dataset::Constellation,
                    "mnist" => Dataset::Mnist,
                    "mnist40" => Dataset::Mnist40,
                    _ => return Err(Error::Config(format!("unknown dataset `{value}`"))),
                }
            }
            "seed" => self.seed = p(key, value)?,
            "steps" => self.steps = p(key, value)?,
            "batch_size" => self.batch_size = p(key, value)?,
            "learning_rate" => self.learning_rate = p(key, value)?,
            "decay_rate" => self.decay_rate = p(key, value)?,
            "decay_steps" => self.decay_steps = p(key, value)?,
            "rms_decay" => self.rms_decay = p(key, value)?,
            "momentum" => self.momentum = p(key, value)?,
            "num_capsules" => self.num_capsules = p(key, value)?,
            "num_candidates" => self.num_candidates = p(key, value)?,
            "feature_dim" => self.feature_dim = p(key, value)?,
            "st_layers" => self.st_layers = p(key, value)?,
            "st_heads" => self.st_heads = p(key, value)?,
            "st_hidden_per_head" => self.st_hidden_per_head = p(key, value)?,
            "st_ff_hidden" => self.st_ff_hidden = p(key, value)?,
            "decoder_hidden" => self.decoder_hidden = parse_list(key, value)?,
            "num_classes" => self.num_classes = p(key, value)?,
            "lambda_floor" => self.lambda_floor = p(key, value)?,
            "num_templates" => self.num_templates = p(key, value)?,
            "template_size" => self.template_size = p(key, value)?,
            "part_cnn" => self.part_cnn = parse_cnn(value)?,
            "special_features" => self.special_features = p(key, value)?,
            "encoder_variant" => {
                self.encoder_variant = match value {
                    "attention" => EncoderVariant::Attention,
                    "linear" => EncoderVariant::Linear,
                    "conv" => EncoderVariant::Conv,
                    _ => return Err(Error::Config(format!("unknown encoder_variant `{value}`"))),
                }
            }
            "sigma_y" => self.sigma_y = p(key, value)?,
            "color_hidden" => self.color_hidden = p(key, value)?,
            "tie_color_alpha" => self.tie_color_alpha = pb(key, value)?,
            "sobel_target" => self.sobel_target = pb(key, value)?,
            "part_ll_weight" => self.part_ll_weight = p(key, value)?,
            "image_ll_weight" => self.image_ll_weight = p(key, value)?,
            "prior_within_sparsity" => self.prior_within_sparsity = p(key, value)?,
            "prior_between_sparsity" => self.prior_between_sparsity = p(key, value)?,
            "posterior_within_sparsity" => self.posterior_within_sparsity = p(key, value)?,
            "posterior_between_sparsity" => self.posterior_between_sparsity = p(key, value)?,
            "too_few_active_capsules" => self.too_few_active_capsules = p(key, value)?,
            "deformation_alpha" => self.deformation_alpha = p(key, value)?,
            "similarity_transforms" => self.similarity_transforms = pb(key, value)?,
            "deformations_on" => self.deformations_on = pb(key, value)?,
            "noise_in_part_caps" => self.noise_in_part_caps = pb(key, value)?,
            "noise_in_object_caps" => self.noise_in_object_caps = pb(key, value)?,
            "prior_sparsity_on" => self.prior_sparsity_on = pb(key, value)?,
            "posterior_sparsity_on" => self.posterior_sparsity_on = pb(key, value)?,
            "special_features_on" => self.special_features_on = pb(key, value)?,
            "posterior_prose_reading" => self.posterior_prose_reading = pb(key, value)?,
            "vote_space" => {
                self.vote_space = match value {
                    "pose" => VoteSpace::Pose,
                    "matrix" => VoteSpace::Matrix,
                    _ => return Err(Error::Config(format!("unknown vote_space `{value}`"))),
                }
            }
            "mnist_images" => self.mnist_images = value.to_string(),
            "mnist_labels" => self.mnist_labels = value.to_string(),
            "canvas_size" => self.canvas_size = p(key, value)?,
            "max_shift" => self.max_shift = p(key, value)?,
            "eval_every" => self.eval_every = p(key, value)?,
            "eval_examples" => self.eval_examples = p(key, value)?,
            "checkpoint_every" => self.checkpoint_every = p(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Every field, fixed order; parse(to_canonical_string(c)) == c.
    pub fn to_canonical_string(&self) -> String {
        let mut s = String::new();
        let model = match self.model {
            Model::Ccae => "ccae",
            Model::Scae => "scae",
        };
        let dataset = match self.dataset {
            Dataset::Constellation => "constellation",
            Dataset::Mnist => "mnist",
            Dataset::Mnist40 => "mnist40",
        };
        let variant = match self.encoder_variant {
            EncoderVariant::Attention => "attention",
            EncoderVariant::Linear => "linear",
            EncoderVariant::Conv => "conv",
        };
        let vote = match self.vote_space {
            VoteSpace::Pose => "pose",
            VoteSpace::Matrix => "matrix",
        };
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let cnn = self
            .part_cnn
            .iter()
            .map(|(c, st)| format!("{c}:{st}"))
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(s, "model = {model}");
        let _ = writeln!(s, "dataset = {dataset}");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "decay_rate = {}", self.decay_rate);
        let _ = writeln!(s, "decay_steps = {}", self.decay_steps);
        let _ = writeln!(s, "rms_decay = {}", self.rms_decay);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "num_capsules = {}", self.num_capsules);
        let _ = writeln!(s, "num_candidates = {}", self.num_candidates);
        let _ = writeln!(s, "feature_dim = {}", self.feature_dim);
        let _ = writeln!(s, "st_layers = {}", self.st_layers);
        let _ = writeln!(s, "st_heads = {}", self.st_heads);
        let _ = writeln!(s, "st_hidden_per_head = {}", self.st_hidden_per_head);
        let _ = writeln!(s, "st_ff_hidden = {}", self.st_ff_hidden);
        let _ = writeln!(s, "decoder_hidden = {}", list(&self.decoder_hidden));
        let _ = writeln!(s, "num_classes = {}", self.num_classes);
        let _ = writeln!(s, "lambda_floor = {}", self.lambda_floor);
        let _ = writeln!(s, "num_templates = {}", self.num_templates);
        let _ = writeln!(s, "template_size = {}", self.template_size);
        let _ = writeln!(s, "part_cnn = {cnn}");
        let _ = writeln!(s, "special_features = {}", self.special_features);
        let _ = writeln!(s, "encoder_variant = {variant}");
        let _ = writeln!(s, "sigma_y = {}", self.sigma_y);
        let _ = writeln!(s, "color_hidden = {}", self.color_hidden);
        let _ = writeln!(s, "tie_color_alpha = {}", self.tie_color_alpha);
        let _ = writeln!(s, "sobel_target = {}", self.sobel_target);
        let _ = writeln!(s, "part_ll_weight = {}", self.part_ll_weight);
        let _ = writeln!(s, "image_ll_weight = {}", self.image_ll_weight);
        let _ = writeln!(s, "prior_within_sparsity = {}", self.prior_within_sparsity);
        let _ = writeln!(s, "prior_between_sparsity = {}", self.prior_between_sparsity);
        let _ = writeln!(s, "posterior_within_sparsity = {}", self.posterior_within_sparsity);
        let _ = writeln!(s, "posterior_between_sparsity = {}", self.posterior_between_sparsity);
        let _ = writeln!(s, "too_few_active_capsules = {}", self.too_few_active_capsules);
        let _ = writeln!(s, "deformation_alpha = {}", self.deformation_alpha);
        let _ = writeln!(s, "similarity_transforms = {}", self.similarity_transforms);
        let _ = writeln!(s, "deformations_on = {}", self.deformations_on);
        let _ = writeln!(s, "noise_in_part_caps = {}", self.noise_in_part_caps);
        let _ = writeln!(s, "noise_in_object_caps = {}", self.noise_in_object_caps);
        let _ = writeln!(s, "prior_sparsity_on = {}", self.prior_sparsity_on);
        let _ = writeln!(s, "posterior_sparsity_on = {}", self.posterior_sparsity_on);
        let _ = writeln!(s, "special_features_on = {}", self.special_features_on);
        let _ = writeln!(s, "posterior_prose_reading = {}", self.posterior_prose_reading);
        let _ = writeln!(s, "vote_space = {vote}");
        let _ = writeln!(s, "mnist_images = {}", self.mnist_images);
        let _ = writeln!(s, "mnist_labels = {}", self.mnist_labels);
        let _ = writeln!(s, "canvas_size = {}", self.canvas_size);
        let _ = writeln!(s, "max_shift = {}", self.max_shift);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "eval_examples = {}", self.eval_examples);
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        s
    }
}

fn split_kv(line: &str) -> Result<(&str, &str)> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected `key = value`, got `{line}`")))?;
    Ok((k.trim(), v.trim()))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Config(format!("cannot parse `{x}` in list for `{key}`")))
        })
        .collect()
}

/// `128:2,128:1` → [(128, 2), (128, 1)]
fn parse_cnn(v: &str) -> Result<Vec<(usize, usize)>> {
    v.split(',')
        .map(|x| {
            let (c, s) = x
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("part_cnn entry `{x}` is not channels:stride")))?;
            let c = c.parse().map_err(|_| Error::Config(format!("bad channel count `{c}`")))?;
            let s = s.parse().map_err(|_| Error::Config(format!("bad stride `{s}`")))?;
            Ok((c, s))
        })
        .collect()
}
