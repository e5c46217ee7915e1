//! Training loops for both models, deterministic data streams, periodic
//! evaluation, metric logging, and checkpointing.
//!
//! RNG layout: one ChaCha seed drives three independent streams — 0 for
//! parameter init, 1 for data sampling, 2 for logit noise. Streams 1 and 2
//! are captured in checkpoints so training resumes bit-exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scae_core::optim::{RmsProp, RmsPropConfig};

use crate::ccae::{self, Ccae};
use crate::checkpoint::{self, Checkpoint, RngState};
use crate::config::{Dataset, Model, RunConfig};
use crate::data::{
    generate_constellations, load_idx, pad_translate, ConstellationSpec, IdxDataset, PointSet,
};
use crate::error::{Error, Result};
use crate::eval::{lin_match, lin_pred, PresenceMatrix};
use crate::losses::{self, LossWeights};
use crate::ocae::Ocae;
use crate::pcae::{image_loglik, Pcae};
use crate::{ParamStore, Tape, TensorId};

pub const METRICS_HEADER: &str = "step,total_loss,part_nll,image_nll,prior_within,prior_between,posterior_within,posterior_between,too_few_active,deformation,lin_match,lin_pred,segmentation_error";

const EVAL_CHUNK: usize = 64;

#[derive(Debug, Default, Clone)]
pub struct MetricsRow {
    pub step: u64,
    pub total_loss: Option<f64>,
    pub part_nll: Option<f64>,
    pub image_nll: Option<f64>,
    pub prior_within: Option<f64>,
    pub prior_between: Option<f64>,
    pub posterior_within: Option<f64>,
    pub posterior_between: Option<f64>,
    pub too_few_active: Option<f64>,
    pub deformation: Option<f64>,
    pub lin_match: Option<f64>,
    pub lin_pred: Option<f64>,
    pub segmentation_error: Option<f64>,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            v.map(|x| format!("{x}")).unwrap_or_default()
        }
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            cell(self.total_loss),
            cell(self.part_nll),
            cell(self.image_nll),
            cell(self.prior_within),
            cell(self.prior_between),
            cell(self.posterior_within),
            cell(self.posterior_between),
            cell(self.too_few_active),
            cell(self.deformation),
            cell(self.lin_match),
            cell(self.lin_pred),
            cell(self.segmentation_error),
        );
        s
    }

    fn fill_component(&mut self, name: &str, value: f64) {
        match name {
            "part_nll" => self.part_nll = Some(value),
            "image_nll" => self.image_nll = Some(value),
            "prior_within" => self.prior_within = Some(value),
            "prior_between" => self.prior_between = Some(value),
            "posterior_within" => self.posterior_within = Some(value),
            "posterior_between" => self.posterior_between = Some(value),
            "too_few_active" => self.too_few_active = Some(value),
            "deformation" => self.deformation = Some(value),
            _ => {}
        }
    }
}

#[derive(Debug)]
pub enum ModelKind {
    Ccae(Ccae),
    Scae { pcae: Pcae, ocae: Ocae },
}

#[derive(Debug)]
enum LoadedData {
    Constellation(ConstellationSpec),
    Images(IdxDataset),
}

#[derive(Debug)]
pub struct Trainer {
    pub cfg: RunConfig,
    pub params: ParamStore,
    pub model: ModelKind,
    opt: RmsProp<f64>,
    pub step: u64,
    data_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    data: LoadedData,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub final_step: u64,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub final_metrics: MetricsRow,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn build_model(cfg: &RunConfig, params: &mut ParamStore, init_rng: &mut ChaCha8Rng) -> Result<ModelKind> {
    Ok(match cfg.model {
        Model::Ccae => ModelKind::Ccae(Ccae::init(params, init_rng, "ccae", cfg.ccae_config())?),
        Model::Scae => {
            let pcae = Pcae::init(params, init_rng, "pcae", cfg.pcae_config())?;
            let ocae = Ocae::init(params, init_rng, "ocae", cfg.ocae_config())?;
            ModelKind::Scae { pcae, ocae }
        }
    })
}

fn load_dataset(cfg: &RunConfig) -> Result<LoadedData> {
    Ok(match cfg.dataset {
        Dataset::Constellation => LoadedData::Constellation(ConstellationSpec::default()),
        Dataset::Mnist | Dataset::Mnist40 => {
            let ds = load_idx(Path::new(&cfg.mnist_images), Path::new(&cfg.mnist_labels))?;
            LoadedData::Images(ds)
        }
    })
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = stream_rng(cfg.seed, 0);
        let mut params = ParamStore::new();
        let model = build_model(&cfg, &mut params, &mut init_rng)?;
        let opt = RmsProp::new(RmsPropConfig {
            learning_rate: cfg.learning_rate,
            decay: cfg.rms_decay,
            momentum: cfg.momentum,
            epsilon: RmsPropConfig::<f64>::epsilon_for_batch(cfg.batch_size),
        });
        let data = load_dataset(&cfg)?;
        Ok(Trainer {
            data_rng: stream_rng(cfg.seed, 1),
            noise_rng: stream_rng(cfg.seed, 2),
            cfg,
            params,
            model,
            opt,
            step: 0,
            data,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let cfg = ckpt.config.clone();
        cfg.validate()?;
        let params = ckpt.param_store()?;
        // Rebuild the model structure; a throwaway store takes the fresh
        // initialization, then every expected name must exist in the
        // restored parameters.
        let mut scratch = ParamStore::new();
        let mut init_rng = stream_rng(cfg.seed, 0);
        let model = build_model(&cfg, &mut scratch, &mut init_rng)?;
        for name in scratch.names() {
            if params.get(name).is_err() {
                return Err(Error::Checkpoint(format!("checkpoint is missing parameter `{name}`")));
            }
        }
        let mut opt = RmsProp::new(RmsPropConfig {
            learning_rate: cfg.learning_rate,
            decay: cfg.rms_decay,
            momentum: cfg.momentum,
            epsilon: RmsPropConfig::<f64>::epsilon_for_batch(cfg.batch_size),
        });
        opt.load_state(
            ckpt.opt_state
                .iter()
                .map(|(n, ms, mom)| (n.clone(), (ms.clone(), mom.clone())))
                .collect(),
        );
        let data = load_dataset(&cfg)?;
        Ok(Trainer {
            data_rng: ckpt.data_rng.restore(),
            noise_rng: ckpt.noise_rng.restore(),
            step: ckpt.step,
            cfg,
            params,
            model,
            opt,
            data,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            step: self.step,
            data_rng: RngState::capture(&self.data_rng),
            noise_rng: RngState::capture(&self.noise_rng),
            params: checkpoint::params_from_store(&self.params),
            opt_state: self
                .opt
                .state()
                .map(|(n, (ms, mom))| (n.to_string(), ms.clone(), mom.clone()))
                .collect(),
        }
    }

    fn next_point_batch(&mut self) -> Vec<PointSet> {
        let LoadedData::Constellation(spec) = &self.data else { unreachable!() };
        generate_constellations(&mut self.data_rng, spec, self.cfg.batch_size)
    }

    /// Draws image indices with replacement; mnist40 additionally pads and
    /// translates with fresh offsets.
    fn next_image_batch(&mut self) -> Result<(Vec<f64>, usize, usize)> {
        let LoadedData::Images(ds) = &self.data else { unreachable!() };
        let b = self.cfg.batch_size;
        let mut pixels = Vec::with_capacity(b * ds.height * ds.width);
        for _ in 0..b {
            let i = self.data_rng.gen_range(0..ds.count);
            pixels.extend_from_slice(&ds.images[i * ds.height * ds.width..(i + 1) * ds.height * ds.width]);
        }
        if self.cfg.dataset == Dataset::Mnist40 {
            let canvas = self.cfg.canvas_size;
            let out = pad_translate(
                &pixels,
                b,
                ds.height,
                ds.width,
                canvas,
                self.cfg.max_shift,
                &mut self.data_rng,
            )?;
            Ok((out, canvas, canvas))
        } else {
            Ok((pixels, ds.height, ds.width))
        }
    }

    /// One optimization step; returns the logged loss components.
    pub fn train_step(&mut self) -> Result<Vec<(String, f64)>> {
        let weights = self.cfg.loss_weights();
        let mut tape = Tape::new();
        let components = match self.cfg.model {
            Model::Ccae => {
                let batch = self.next_point_batch();
                let ModelKind::Ccae(model) = &self.model else { unreachable!() };
                let noise = self.cfg.noise_in_object_caps.then_some(&mut self.noise_rng);
                let out = model.step(
                    &mut tape,
                    &self.params,
                    &batch,
                    &weights,
                    self.cfg.num_classes,
                    noise,
                )?;
                tape.backward(out.total)?;
                out.components
            }
            Model::Scae => {
                let (pixels, h, w) = self.next_image_batch()?;
                let ModelKind::Scae { pcae, ocae } = &self.model else { unreachable!() };
                let out = scae_step(
                    &mut tape,
                    &self.params,
                    pcae,
                    ocae,
                    &pixels,
                    self.cfg.batch_size,
                    (h, w),
                    &weights,
                    &self.cfg,
                    Some(&mut self.noise_rng),
                )?;
                tape.backward(out.total)?;
                out.components
            }
        };
        let mut grads: IndexMap<String, Vec<f64>> = IndexMap::new();
        for (name, g) in tape.leaf_grads() {
            if let Some(g) = g {
                grads.insert(name.to_string(), g.to_vec());
            }
        }
        self.opt.step(&mut self.params, &grads)?;
        self.step += 1;
        if self.cfg.decay_steps > 0 && self.cfg.decay_rate < 1.0 {
            let factor = self.cfg.decay_rate.powi((self.step / self.cfg.decay_steps as u64) as i32);
            self.opt.set_learning_rate(self.cfg.learning_rate * factor);
        }
        Ok(components)
    }

    /// Noise-free evaluation on a held-out stream.
    pub fn evaluate(&self, with_lin_metrics: bool) -> Result<MetricsRow> {
        let mut row = evaluate_model(&self.cfg, &self.params, &self.model, self.cfg.eval_examples, with_lin_metrics)?;
        row.step = self.step;
        Ok(row)
    }

    /// Full training run with periodic evaluation and checkpointing.
    /// Metric rows flush as they are produced. A non-finite loss saves a
    /// halt checkpoint and reports the offending component.
    pub fn run(&mut self, out_dir: &Path) -> Result<TrainOutcome> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let metrics_path = out_dir.join("metrics.csv");
        let ckpt_path = out_dir.join("checkpoint.bin");
        let mut log = std::io::BufWriter::new(
            std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?,
        );
        let mut emit = |log: &mut std::io::BufWriter<std::fs::File>, line: &str| -> Result<()> {
            use std::io::Write;
            writeln!(log, "{line}").and_then(|_| log.flush()).map_err(|e| Error::io(&metrics_path, e))
        };
        emit(&mut log, METRICS_HEADER)?;

        let mut last_eval = self.evaluate(false)?;
        emit(&mut log, &last_eval.to_csv())?;

        while self.step < self.cfg.steps as u64 {
            let components = match self.train_step() {
                Ok(c) => c,
                Err(err @ (Error::NonFiniteLoss(_) | Error::Core(scae_core::Error::NonFiniteGrad(_)))) => {
                    let halt = out_dir.join("checkpoint-halt.bin");
                    checkpoint::save(&halt, &self.to_checkpoint())?;
                    return Err(err);
                }
                Err(other) => return Err(other),
            };
            let at_end = self.step >= self.cfg.steps as u64;
            if self.step % self.cfg.eval_every as u64 == 0 || at_end {
                let mut row = self.evaluate(at_end && self.cfg.model == Model::Scae)?;
                let total: f64 = components
                    .iter()
                    .map(|(name, v)| v * component_weight(&self.cfg.loss_weights(), name))
                    .sum();
                row.total_loss = Some(total);
                emit(&mut log, &row.to_csv())?;
                last_eval = row;
            }
            if self.step % self.cfg.checkpoint_every as u64 == 0 || at_end {
                checkpoint::save(&ckpt_path, &self.to_checkpoint())?;
            }
        }
        checkpoint::save(&ckpt_path, &self.to_checkpoint())?;
        Ok(TrainOutcome {
            final_step: self.step,
            metrics_path,
            checkpoint_path: ckpt_path,
            final_metrics: last_eval,
        })
    }
}

fn component_weight(w: &LossWeights, name: &str) -> f64 {
    match name {
        "part_nll" => w.part_ll,
        "image_nll" => w.image_ll,
        "prior_within" => w.prior_within,
        "prior_between" => w.prior_between,
        "posterior_within" => w.posterior_within,
        "posterior_between" => w.posterior_between,
        "too_few_active" => w.too_few_active,
        "deformation" => w.deformation_alpha,
        _ => 0.0,
    }
}

/// Output of one SCAE forward pass.
pub struct ScaeStep {
    pub total: TensorId,
    pub components: Vec<(String, f64)>,
    /// `[B, K]` prior capsule presences (values).
    pub a_prior: Vec<f64>,
    pub image_loglik: f64,
    pub part_loglik: f64,
    pub uncovered_fraction: f64,
}

/// Joint PCAE + OCAE objective: both likelihoods and every auxiliary loss
/// combine into a single backward pass.
#[allow(clippy::too_many_arguments)]
pub fn scae_step(
    t: &mut Tape,
    ps: &ParamStore,
    pcae: &Pcae,
    ocae: &Ocae,
    pixels: &[f64],
    batch: usize,
    hw: (usize, usize),
    weights: &LossWeights,
    cfg: &RunConfig,
    mut noise: Option<&mut ChaCha8Rng>,
) -> Result<ScaeStep> {
    let images = t.constant(&[batch, hw.0, hw.1, 1], pixels.to_vec())?;
    let target = if cfg.sobel_target {
        let filtered = crate::pcae::sobel_preprocess(pixels, batch, hw.0, hw.1, 1);
        t.constant(&[batch, hw.0, hw.1, 1], filtered)?
    } else {
        images
    };
    let part_noise = cfg.noise_in_part_caps.then(|| noise.as_deref_mut()).flatten();
    let parts = pcae.encode_parts(t, ps, images, part_noise)?;
    let mixture = pcae.render_mixture(t, ps, &parts)?;
    let img_ll = image_loglik(t, target, &mixture, cfg.sigma_y)?;
    let image_nll = t.neg(img_ll);

    let templates = pcae.templates_combined(t, ps)?;
    let obj_noise = cfg.noise_in_object_caps.then(|| noise.as_deref_mut()).flatten();
    let caps = ocae.encode_objects(t, ps, &parts, templates, obj_noise)?;
    let vote_noise = cfg.noise_in_object_caps.then(|| noise.as_deref_mut()).flatten();
    let votes = ocae.predict_part_votes(t, ps, &caps, vote_noise)?;
    let lik = ocae.part_loglik(t, &parts, &caps, &votes)?;
    let part_nll = t.neg(lik.loglik);

    let a_prior = losses::presence_prior(t, caps.presence, votes.presence)?;
    let (prior_w, prior_b) = losses::prior_sparsity(t, a_prior, cfg.num_classes)?;
    let (post_w, post_b) = losses::posterior_sparsity(t, lik.posterior, cfg.posterior_prose_reading)?;
    let deform = ocae.deformation_penalty(t, &votes, 1.0)?;

    let (total, components) = losses::total_loss(
        t,
        &[
            ("part_nll", part_nll, weights.part_ll),
            ("image_nll", image_nll, weights.image_ll),
            ("prior_within", prior_w, weights.prior_within),
            ("prior_between", prior_b, weights.prior_between),
            ("posterior_within", post_w, weights.posterior_within),
            ("posterior_between", post_b, weights.posterior_between),
            ("deformation", deform, weights.deformation_alpha),
        ],
    )?;
    Ok(ScaeStep {
        total,
        components,
        a_prior: t.value(a_prior).to_vec(),
        image_loglik: t.value(img_ll)[0],
        part_loglik: t.value(lik.loglik)[0],
        uncovered_fraction: mixture.uncovered_fraction,
    })
}

/// Evaluates a model noise-free. For the image model, presences for the
/// lin metrics come from the same pass.
pub fn evaluate_model(
    cfg: &RunConfig,
    params: &ParamStore,
    model: &ModelKind,
    examples: usize,
    with_lin_metrics: bool,
) -> Result<MetricsRow> {
    let mut row = MetricsRow::default();
    let weights = cfg.loss_weights();
    match model {
        ModelKind::Ccae(m) => {
            // Held-out stream 3: never touched by training.
            let mut eval_rng = stream_rng(cfg.seed, 3);
            let spec = ConstellationSpec::default();
            let mut nll_sum = 0.0;
            let mut correct = 0usize;
            let mut total = 0usize;
            let mut comp_sums: IndexMap<String, f64> = IndexMap::new();
            let mut chunks = 0usize;
            let mut remaining = examples;
            while remaining > 0 {
                let take = remaining.min(EVAL_CHUNK);
                remaining -= take;
                let batch = generate_constellations(&mut eval_rng, &spec, take);
                let mut t = Tape::new();
                let out = m.step(&mut t, params, &batch, &weights, cfg.num_classes, None)?;
                nll_sum += -out.loglik * take as f64;
                chunks += 1;
                for (name, v) in &out.components {
                    *comp_sums.entry(name.clone()).or_insert(0.0) += v;
                }
                for (bi, ex) in batch.iter().enumerate() {
                    let (c, n) = ccae::segmentation_accuracy(
                        &out.assignments[bi],
                        &ex.labels,
                        &ex.present,
                        m.cfg.num_caps,
                    );
                    correct += c;
                    total += n;
                }
            }
            row.part_nll = Some(nll_sum / examples as f64);
            for (name, v) in comp_sums {
                if name != "part_nll" {
                    row.fill_component(&name, v / chunks as f64);
                }
            }
            row.segmentation_error = Some(1.0 - correct as f64 / total.max(1) as f64);
        }
        ModelKind::Scae { pcae, ocae } => {
            let ds = load_idx(Path::new(&cfg.mnist_images), Path::new(&cfg.mnist_labels))?;
            let n = examples.min(ds.count);
            let mut presences = Vec::with_capacity(n * cfg.num_capsules);
            let mut labels = Vec::with_capacity(n);
            let mut img_ll_sum = 0.0;
            let mut part_ll_sum = 0.0;
            let mut comp_sums: IndexMap<String, f64> = IndexMap::new();
            let mut chunks = 0usize;
            let mut at = 0usize;
            // Evaluation reuses the stored canvas without augmentation;
            // mnist40 centers digits on the canvas deterministically.
            while at < n {
                let take = (n - at).min(EVAL_CHUNK);
                let mut pixels = Vec::with_capacity(take * ds.height * ds.width);
                for i in at..at + take {
                    pixels.extend_from_slice(
                        &ds.images[i * ds.height * ds.width..(i + 1) * ds.height * ds.width],
                    );
                }
                let (pixels, h, w) = if cfg.dataset == Dataset::Mnist40 {
                    let canvas = cfg.canvas_size;
                    let mut centered = vec![0.0; take * canvas * canvas];
                    let off = (canvas - ds.height) / 2;
                    for b in 0..take {
                        for y in 0..ds.height {
                            let src = (b * ds.height + y) * ds.width;
                            let dst = (b * canvas + off + y) * canvas + off;
                            centered[dst..dst + ds.width]
                                .copy_from_slice(&pixels[src..src + ds.width]);
                        }
                    }
                    (centered, canvas, canvas)
                } else {
                    (pixels, ds.height, ds.width)
                };
                let mut t = Tape::new();
                let out = scae_step(
                    &mut t,
                    params,
                    pcae,
                    ocae,
                    &pixels,
                    take,
                    (h, w),
                    &weights,
                    cfg,
                    None,
                )?;
                img_ll_sum += out.image_loglik * take as f64;
                part_ll_sum += out.part_loglik * take as f64;
                presences.extend_from_slice(&out.a_prior);
                labels.extend_from_slice(&ds.labels[at..at + take]);
                chunks += 1;
                for (name, v) in &out.components {
                    *comp_sums.entry(name.clone()).or_insert(0.0) += v;
                }
                at += take;
            }
            row.image_nll = Some(-img_ll_sum / n as f64);
            row.part_nll = Some(-part_ll_sum / n as f64);
            for (name, v) in comp_sums {
                if name != "part_nll" && name != "image_nll" {
                    row.fill_component(&name, v / chunks.max(1) as f64);
                }
            }
            if with_lin_metrics {
                let pm = PresenceMatrix {
                    presences: presences.clone(),
                    num_features: cfg.num_capsules,
                    labels: labels.clone(),
                };
                row.lin_match = Some(lin_match(&pm, cfg.num_classes, cfg.seed)?);
                // Probe: train on the leading 90%, report on the tail.
                let split = (n * 9) / 10;
                let train = PresenceMatrix {
                    presences: presences[..split * cfg.num_capsules].to_vec(),
                    num_features: cfg.num_capsules,
                    labels: labels[..split].to_vec(),
                };
                let test = PresenceMatrix {
                    presences: presences[split * cfg.num_capsules..].to_vec(),
                    num_features: cfg.num_capsules,
                    labels: labels[split..].to_vec(),
                };
                row.lin_pred = Some(lin_pred(&train, &test, cfg.num_classes)?);
            }
        }
    }
    Ok(row)
}

/// Prior-presence vectors and labels for every example in the dataset;
/// what external embedding tools consume.
pub fn dump_presences(cfg: &RunConfig, params: &ParamStore, model: &ModelKind) -> Result<PresenceMatrix> {
    match model {
        ModelKind::Scae { pcae, ocae } => {
            let ds = load_idx(Path::new(&cfg.mnist_images), Path::new(&cfg.mnist_labels))?;
            let count = ds.count;
            let mut presences = Vec::with_capacity(count * cfg.num_capsules);
            let mut labels = Vec::with_capacity(count);
            let weights = cfg.loss_weights();
            let mut at = 0usize;
            while at < count {
                let take = (count - at).min(EVAL_CHUNK);
                let mut pixels = Vec::with_capacity(take * ds.height * ds.width);
                for i in at..at + take {
                    pixels.extend_from_slice(
                        &ds.images[i * ds.height * ds.width..(i + 1) * ds.height * ds.width],
                    );
                }
                let mut t = Tape::new();
                let out = scae_step(
                    &mut t,
                    params,
                    pcae,
                    ocae,
                    &pixels,
                    take,
                    (ds.height, ds.width),
                    &weights,
                    cfg,
                    None,
                )?;
                presences.extend_from_slice(&out.a_prior);
                labels.extend_from_slice(&ds.labels[at..at + take]);
                at += take;
            }
            Ok(PresenceMatrix { presences, num_features: cfg.num_capsules, labels })
        }
        ModelKind::Ccae(m) => {
            // Constellations have no class labels; presences are still
            // dumpable for inspection (label column holds present count).
            let mut eval_rng = stream_rng(cfg.seed, 3);
            let spec = ConstellationSpec::default();
            let batch = generate_constellations(&mut eval_rng, &spec, cfg.eval_examples);
            let mut t = Tape::new();
            let (points, mask) = crate::data::points_to_tensors(&mut t, &batch)?;
            let caps = m.encode::<ChaCha8Rng>(&mut t, params, points, mask, None)?;
            let cand = m.decode_candidates::<ChaCha8Rng>(&mut t, params, &caps, None)?;
            let a_prior = losses::presence_prior(&mut t, caps.presence, cand.presence)?;
            Ok(PresenceMatrix {
                presences: t.value(a_prior).to_vec(),
                num_features: m.cfg.num_caps,
                labels: batch.iter().map(|b| b.num_present() as u8).collect(),
            })
        }
    }
}
