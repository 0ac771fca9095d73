use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use log::{info, warn};

use super::losses::class_weights_from_frequency;
use super::optim::{AdamW, OneCycle};
use super::step::{multitask_step, DetBatch, LossWeights, SegBatch, StepMetrics};
use crate::data::{
    fixed_size_sample, gt_box_augment, normalize_reflectance, AugmentPolicy, BoxBank, DetView, FovConfig, SegView,
};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, DassModel, ModelConfig};

/// Optimization and data-pipeline settings of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Scenes per mini-batch, for each task.
    pub batch_size: usize,
    pub epochs: usize,
    /// Peak learning rate of the one-cycle schedule.
    pub lr: f64,
    pub weight_decay: f64,
    /// First-moment decay of the optimizer.
    pub momentum: f64,
    pub warmup_frac: f64,
    pub w_seg: f64,
    pub w_det: f64,
    /// Weight classes by inverse frequency; uniform weights otherwise.
    pub class_weighting: bool,
    pub points_per_scene: usize,
    pub seed: u64,
    /// Train the auxiliary detection task alongside segmentation.
    pub aux: bool,
    pub fov: FovConfig,
    pub augment: AugmentPolicy,
    /// Transplant ground-truth boxes into detection scenes.
    pub gt_box_augment: bool,
    pub gt_box_max_added: usize,
    pub ground_y: f64,
    /// Evaluate every this many epochs; 0 evaluates after the last epoch only.
    pub eval_every: usize,
    /// Verify per step that the joint gradient is the weighted sum of the
    /// task gradients. Triples the cost of a step.
    pub check_linearity: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            epochs: 75,
            lr: 0.002,
            weight_decay: 0.001,
            momentum: 0.9,
            warmup_frac: 0.3,
            w_seg: 1.5,
            w_det: 1.0,
            class_weighting: true,
            points_per_scene: 2048,
            seed: 0,
            aux: true,
            fov: FovConfig::default(),
            augment: AugmentPolicy::default(),
            gt_box_augment: true,
            gt_box_max_added: 4,
            ground_y: 0.0,
            eval_every: 0,
            check_linearity: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.epochs > 0
            && self.lr > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.warmup_frac > 0.0
            && self.warmup_frac < 1.0
            && self.w_seg > 0.0
            && self.w_det >= 0.0
            && self.points_per_scene > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration: {self:?}")))
        }
    }
}

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Updates taken so far.
    pub step: usize,
    /// Learning rate of the epoch's last update.
    pub lr: f64,
    pub seg_loss: Option<f64>,
    pub det_loss: Option<f64>,
    pub det_box_terms: Option<f64>,
    pub det_objectness: Option<f64>,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eval: Option<serde_json::Value>,
}

// Stream tags keeping the derived seeds of different consumers apart.
const TAG_INIT: u64 = 1;
const TAG_SEG_ORDER: u64 = 2;
const TAG_DET_ORDER: u64 = 3;
const TAG_SEG_SAMPLE: u64 = 4;
const TAG_DET_SAMPLE: u64 = 5;

/// Deterministic seed for a tuple of coordinates (splitmix64 chaining).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        h = h.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

const CHECKPOINT_KEYS: [&str; 5] = ["model", "train", "epoch", "step", "adam_t"];

/// Training state: model, optimizer and the cropped corpora. Every batch is
/// a pure function of the seed, the epoch and the position in the epoch, so
/// a run resumed from a checkpoint continues exactly like an uninterrupted
/// one.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: DassModel,
    pub opt: AdamW,
    pub weights: LossWeights,
    pub schedule: OneCycle,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed updates.
    pub step: usize,
    /// Caller-owned entries stored alongside the checkpoint metadata and
    /// restored on resume.
    pub extra_meta: serde_json::Map<String, serde_json::Value>,
    seg: Vec<SegView>,
    det: Vec<DetView>,
    bank: BoxBank,
}

impl Trainer {
    /// Starts a fresh run. Without the auxiliary task the model is built
    /// without a proposal head and the detection views are ignored.
    pub fn new(model_config: ModelConfig, config: TrainConfig, seg: &[SegView], det: &[DetView]) -> Result<Self> {
        config.validate()?;
        let mut model_config = model_config;
        if !config.aux {
            model_config.det_head = false;
            model_config.sff = false;
        }
        let model = DassModel::new(model_config, derive_seed(&[config.seed, TAG_INIT]))?;
        Self::assemble(model, config, seg, det)
    }

    fn assemble(model: DassModel, config: TrainConfig, seg: &[SegView], det: &[DetView]) -> Result<Self> {
        if seg.is_empty() {
            return Err(Error::Data("segmentation corpus is empty".into()));
        }
        let uses_det = config.aux && model.has_det_head();
        if uses_det && det.is_empty() {
            return Err(Error::Data("detection corpus is empty".into()));
        }
        let seg: Vec<SegView> = seg.iter().map(|v| v.fov_crop(&config.fov)).collect();
        let det: Vec<DetView> = if uses_det {
            det.iter().map(|v| v.fov_crop(&config.fov)).collect()
        } else {
            Vec::new()
        };
        if uses_det && det.iter().all(|v| v.boxes.is_empty()) {
            warn!("detection corpus has no boxes; only objectness will train");
        }
        let k = model.config.num_classes;
        let w_classes = if config.class_weighting {
            class_weights_from_frequency(seg.iter().map(|v| v.labels.as_slice()), k)
        } else {
            vec![1.0; k]
        };
        let w_det = if uses_det { config.w_det } else { 0.0 };
        let weights = LossWeights::new(config.w_seg, w_det, w_classes);
        weights.validate(k)?;
        let bank = if uses_det && config.gt_box_augment {
            BoxBank::from_views(&det)
        } else {
            BoxBank::default()
        };
        let opt = AdamW::new(&model.store, config.momentum, config.weight_decay);
        let steps = seg.len().div_ceil(config.batch_size);
        let schedule = OneCycle::new(config.lr, steps * config.epochs, config.warmup_frac);
        Ok(Trainer {
            config,
            model,
            opt,
            weights,
            schedule,
            epoch: 0,
            step: 0,
            seg,
            det,
            bank,
            extra_meta: serde_json::Map::new(),
        })
    }

    /// Updates per epoch: one pass over the segmentation corpus.
    pub fn steps_per_epoch(&self) -> usize {
        self.seg.len().div_ceil(self.config.batch_size)
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_epoch() * self.config.epochs
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// Segmentation mini-batch `step` of `epoch`; the last one may be short.
    pub fn seg_batch(&self, epoch: usize, step: usize) -> SegBatch {
        let c = &self.config;
        let order = shuffled(self.seg.len(), derive_seed(&[c.seed, TAG_SEG_ORDER, epoch as u64]));
        let lo = step * c.batch_size;
        let hi = (lo + c.batch_size).min(order.len());
        let mut clouds = Vec::with_capacity(hi - lo);
        let mut labels = Vec::with_capacity(hi - lo);
        for (pos, &i) in order[lo..hi].iter().enumerate() {
            let s = derive_seed(&[c.seed, TAG_SEG_SAMPLE, epoch as u64, (lo + pos) as u64]);
            let v = self.seg[i].augment(derive_seed(&[s, 0]), &c.augment);
            let (mut cloud, l) = fixed_size_sample(&v.cloud, Some(&v.labels), c.points_per_scene, derive_seed(&[s, 1]));
            normalize_reflectance(&mut cloud);
            clouds.push(cloud);
            labels.push(l.expect("labels requested"));
        }
        SegBatch { clouds, labels }
    }

    /// Detection mini-batch drawn alongside segmentation step `step` of
    /// `epoch`. The detection corpus is cycled: draw `k` of the run belongs
    /// to cycle `k / |det|`, each cycle with its own shuffle.
    pub fn det_batch(&self, epoch: usize, step: usize) -> Option<DetBatch> {
        if self.det.is_empty() {
            return None;
        }
        let c = &self.config;
        let n = self.det.len();
        let first = (epoch * self.steps_per_epoch() + step) * c.batch_size;
        let mut cycle_cache: Option<(usize, Vec<usize>)> = None;
        let mut clouds = Vec::with_capacity(c.batch_size);
        let mut boxes = Vec::with_capacity(c.batch_size);
        for k in first..first + c.batch_size {
            let cycle = k / n;
            if cycle_cache.as_ref().is_none_or(|(cy, _)| *cy != cycle) {
                cycle_cache = Some((cycle, shuffled(n, derive_seed(&[c.seed, TAG_DET_ORDER, cycle as u64]))));
            }
            let i = cycle_cache.as_ref().expect("just set").1[k % n];
            let s = derive_seed(&[c.seed, TAG_DET_SAMPLE, k as u64]);
            let mut v = if c.gt_box_augment && !self.bank.is_empty() {
                gt_box_augment(&self.det[i], &self.bank, derive_seed(&[s, 2]), c.gt_box_max_added, c.ground_y)
            } else {
                self.det[i].clone()
            };
            v = v.augment(derive_seed(&[s, 0]), &c.augment);
            let (mut cloud, _) = fixed_size_sample(&v.cloud, None, c.points_per_scene, derive_seed(&[s, 1]));
            normalize_reflectance(&mut cloud);
            clouds.push(cloud);
            boxes.push(v.boxes);
        }
        Some(DetBatch { clouds, boxes })
    }

    /// Runs one epoch and returns its log record (without evaluation).
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.epoch;
        let mut sums = [0.0; 5];
        let mut counts = [0usize; 5];
        let mut lr = 0.0;
        for s in 0..self.steps_per_epoch() {
            let seg = self.seg_batch(epoch, s);
            let det = if self.weights.w_det > 0.0 {
                self.det_batch(epoch, s)
            } else {
                None
            };
            lr = self.schedule.lr(self.step);
            let m: StepMetrics = multitask_step(
                &mut self.model,
                Some(&seg),
                det.as_ref(),
                &self.weights,
                &mut self.opt,
                lr,
                self.config.check_linearity,
            )
            .map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("epoch {epoch}, step {}: {msg}", self.step)),
                other => other,
            })?;
            for (i, v) in [m.seg_loss, m.det_loss, m.det_box_terms, m.det_objectness, Some(m.total)]
                .into_iter()
                .enumerate()
            {
                if let Some(v) = v {
                    sums[i] += v;
                    counts[i] += 1;
                }
            }
            self.step += 1;
        }
        self.epoch += 1;
        let mean = |i: usize| (counts[i] > 0).then(|| sums[i] / counts[i] as f64);
        let rec = EpochRecord {
            epoch: self.epoch,
            step: self.step,
            lr,
            seg_loss: mean(0),
            det_loss: mean(1),
            det_box_terms: mean(2),
            det_objectness: mean(3),
            total: mean(4).unwrap_or(0.0),
            eval: None,
        };
        info!(
            "epoch {} done: total {:.4}, seg {:?}, det {:?}",
            rec.epoch, rec.total, rec.seg_loss, rec.det_loss
        );
        Ok(rec)
    }

    /// Model, optimizer moments and progress in one checkpoint.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut tensors = self.model.named_tensors();
        tensors.extend(self.opt.named_tensors(&self.model.store));
        let mut meta = self.extra_meta.clone();
        for (k, v) in [
            ("model", serde_json::json!(self.model.config)),
            ("train", serde_json::json!(self.config)),
            ("epoch", serde_json::json!(self.epoch)),
            ("step", serde_json::json!(self.step)),
            ("adam_t", serde_json::json!(self.opt.t)),
        ] {
            meta.insert(k.to_string(), v);
        }
        Checkpoint {
            meta: serde_json::Value::Object(meta),
            tensors,
        }
    }

    /// Resumes a run from [`Trainer::checkpoint`] output over the same
    /// corpora.
    pub fn resume(ckpt: &Checkpoint, seg: &[SegView], det: &[DetView]) -> Result<Self> {
        let meta = &ckpt.meta;
        let field = |k: &str| meta.get(k).ok_or_else(|| Error::Checkpoint(format!("checkpoint meta lacks `{k}`")));
        let bad = |e: serde_json::Error| Error::Checkpoint(e.to_string());
        let model_config: ModelConfig = serde_json::from_value(field("model")?.clone()).map_err(bad)?;
        let config: TrainConfig = serde_json::from_value(field("train")?.clone()).map_err(bad)?;
        let epoch: usize = serde_json::from_value(field("epoch")?.clone()).map_err(bad)?;
        let step: usize = serde_json::from_value(field("step")?.clone()).map_err(bad)?;
        let t: u64 = serde_json::from_value(field("adam_t")?.clone()).map_err(bad)?;
        let model = DassModel::from_tensors(model_config, ckpt)?;
        let mut tr = Self::assemble(model, config, seg, det)?;
        tr.opt.load(&tr.model.store, |n| ckpt.get(n).cloned(), t)?;
        tr.epoch = epoch;
        tr.step = step;
        if let Some(obj) = meta.as_object() {
            tr.extra_meta = obj
                .iter()
                .filter(|(k, _)| !CHECKPOINT_KEYS.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
        }
        Ok(tr)
    }
}

/// Trains until the configured epoch count, appending one JSON line per
/// epoch to `log`. `eval` runs every `eval_every` epochs and after the last
/// one; its result is attached to that epoch's record. With `checkpoint`,
/// the state is written there after every epoch.
pub fn train_loop(
    trainer: &mut Trainer,
    log: &mut dyn Write,
    eval: impl FnMut(&DassModel, usize) -> Result<serde_json::Value>,
    checkpoint: Option<&Path>,
) -> Result<Vec<EpochRecord>> {
    train_loop_until(trainer, log, eval, checkpoint, usize::MAX)
}

/// [`train_loop`] that also stops once `stop_epoch` epochs are complete, so
/// a run can be split across invocations and resumed from its checkpoint.
pub fn train_loop_until(
    trainer: &mut Trainer,
    log: &mut dyn Write,
    mut eval: impl FnMut(&DassModel, usize) -> Result<serde_json::Value>,
    checkpoint: Option<&Path>,
    stop_epoch: usize,
) -> Result<Vec<EpochRecord>> {
    let mut records = Vec::new();
    while !trainer.is_done() && trainer.epoch < stop_epoch {
        let mut rec = trainer.run_epoch()?;
        let every = trainer.config.eval_every;
        if trainer.is_done() || (every > 0 && rec.epoch % every == 0) {
            rec.eval = Some(eval(&trainer.model, rec.epoch)?);
        }
        let line = serde_json::to_string(&rec).expect("record serializes");
        writeln!(log, "{line}").map_err(|e| Error::io("metric log", e))?;
        log.flush().map_err(|e| Error::io("metric log", e))?;
        if let Some(p) = checkpoint {
            trainer.checkpoint().write(p)?;
        }
        records.push(rec);
    }
    Ok(records)
}
