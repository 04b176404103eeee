use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use crate::augment::{apply_pipeline, AugmentContext, AugmentPipeline, SegmentSource};
use crate::contrast::{momentum_update, KeyQueue, LossConfig, SslModel, PROJECTION_DIM};
use crate::dataio::{mode_center_normalize, Recording, SplitMode, SplitSpec};
use crate::error::{Error, Result};
use crate::nn::{grad_max_abs, Checkpoint, Module};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Mode-centre each augmented view. Set by callers that preprocess
    /// segments this way rather than read from config files.
    #[serde(skip)]
    pub mode_center: bool,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { steps: 2000, batch_size: 64, lr: 1e-4, weight_decay: 0.0, mode_center: false }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be a finite value > 0, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", format!("must be a finite value >= 0, got {}", self.weight_decay));
        }
        Ok(())
    }
}

/// One line of the pretraining loss curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepMetrics {
    /// Number of completed steps.
    pub step: usize,
    pub loss: f64,
    pub loss_infonce: f64,
    pub loss_rsub: Option<f64>,
    pub loss_csub: Option<f64>,
    pub tau: f64,
    pub queue_fill: usize,
    pub skipped_anchors: usize,
}

/// Model, key queue and optimizer state of a contrastive run.
#[derive(Debug, Clone)]
pub struct SslTrainer<T> {
    pub model: SslModel<T>,
    pub queue: KeyQueue<T>,
    pub loss_cfg: LossConfig,
    pub cfg: PretrainConfig,
    opt: Adam<T>,
    opt_c: Adam<T>,
    steps_done: usize,
}

impl<T: Scalar> SslTrainer<T> {
    pub fn new(model: SslModel<T>, loss_cfg: LossConfig, cfg: PretrainConfig) -> Result<Self> {
        loss_cfg.validate()?;
        cfg.validate()?;
        if cfg.batch_size > loss_cfg.queue_capacity {
            return Err(Error::Config(format!(
                "batch_size: {} exceeds the key queue capacity {}",
                cfg.batch_size, loss_cfg.queue_capacity
            )));
        }
        let queue = KeyQueue::new(loss_cfg.queue_capacity, PROJECTION_DIM)?;
        Ok(Self { model, queue, loss_cfg, cfg, opt: Adam::new(), opt_c: Adam::new(), steps_done: 0 })
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    /// One optimization step on a batch of paired views `[B, C, W]`.
    ///
    /// The subject classifier is updated first on the detached embeddings;
    /// the encoder then sees the confusion term of the updated classifier.
    pub fn step(&mut self, query_view: &Tensor<T>, key_view: &Tensor<T>, subjects: &[u32]) -> Result<StepMetrics> {
        let (lr, wd) = (self.cfg.lr, self.cfg.weight_decay);
        for (what, x) in [("query", query_view), ("key", key_view)] {
            if !x.all_finite() {
                return Err(Error::InvalidInput(format!("non-finite value in the {what} batch")));
            }
        }
        // finite inputs with an unnormalizable embedding mean the weights diverged
        let diverged = |this: &Self, e: Error, what: &str| match e {
            Error::InvalidInput(msg) => this.abort(format!("{what} embedding: {msg}")),
            e => e,
        };
        let state = self.model.encode_query(query_view).map_err(|e| diverged(self, e, "query"))?;
        let keys = self.model.encode_keys(key_view).map_err(|e| diverged(self, e, "key"))?;
        let targets = self.model.subject_indices(subjects)?;
        let loss_c = self.model.classifier_grads(&state.h, &targets)?;
        if let Some(lc) = loss_c {
            if !lc.is_finite() {
                return Err(self.abort(format!("subject classifier loss {lc}")));
            }
            let c = self.model.csub.as_mut().expect("classifier loss without classifier");
            self.opt_c.step(&mut [("C", c)], lr, wd)?;
        }
        let gf = self.model.online_grads(&state, &keys, subjects, &self.queue, &self.loss_cfg)?;
        if !gf.loss.is_finite() {
            return Err(self.abort(format!("loss {} (infonce {}, r_sub {:?})", gf.loss, gf.infonce, gf.rsub)));
        }
        let m = &mut self.model;
        let updated = self.opt.step(&mut [("G", &mut m.g), ("F", &mut m.f), ("", &mut m.temperature)], lr, wd);
        if let Err(e) = updated {
            return Err(self.abort(e.to_string()));
        }
        m.temperature.clamp();
        let mom = T::lit(self.loss_cfg.momentum);
        momentum_update(&mut m.gk, &m.g, mom)?;
        momentum_update(&mut m.fk, &m.f, mom)?;
        self.queue.enqueue(&keys, subjects)?;
        self.steps_done += 1;
        Ok(StepMetrics {
            step: self.steps_done,
            loss: gf.loss.to_f64_lossy(),
            loss_infonce: gf.infonce.to_f64_lossy(),
            loss_rsub: gf.rsub.map(|v| v.to_f64_lossy()),
            loss_csub: loss_c.map(|v| v.to_f64_lossy()),
            tau: self.model.temperature.tau().to_f64_lossy(),
            queue_fill: self.queue.len(),
            skipped_anchors: gf.skipped,
        })
    }

    fn abort(&self, what: String) -> Error {
        let grad = |name: &str, m: &dyn Module<T>| format!("{name} max|grad| {:?}", grad_max_abs(m));
        let mut parts = vec![what, grad("G", &self.model.g), grad("F", &self.model.f)];
        if let Some(c) = &self.model.csub {
            parts.push(grad("C", c));
        }
        parts.push(format!("tau {}", self.model.temperature.tau()));
        parts.push(format!("queue fill {}", self.queue.len()));
        Error::NonFinite { step: self.steps_done + 1, detail: parts.join("; ") }
    }

    /// Model state plus the completed step count.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        self.model.save_into(&mut ck);
        ck.insert_scalar("step", self.steps_done as f64);
        ck
    }
}

/// Uniform draws of window starts from `(recording, lo, hi)` spans, keeping a
/// margin at both ends for crop jitter.
#[derive(Debug, Clone)]
pub struct WindowSampler {
    window: usize,
    /// `(recording, first start, number of starts)`.
    ranges: Vec<(usize, usize, usize)>,
    cumulative: Vec<usize>,
}

impl WindowSampler {
    pub fn new(spans: &[(usize, usize, usize)], window: usize, margin: usize) -> Result<Self> {
        let mut ranges = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0;
        for &(rec, lo, hi) in spans {
            let first = lo + margin;
            let Some(last) = hi.checked_sub(window + margin) else { continue };
            if last >= first {
                total += last - first + 1;
                ranges.push((rec, first, last - first + 1));
                cumulative.push(total);
            }
        }
        if total == 0 {
            return Err(Error::InvalidInput(format!("no span fits a {window}-sample window with margin {margin}")));
        }
        Ok(Self { window, ranges, cumulative })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn positions(&self) -> usize {
        *self.cumulative.last().unwrap_or(&0)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SegmentSource {
        let u = rng.random_range(0..self.positions());
        let i = self.cumulative.partition_point(|&c| c <= u);
        let before = if i == 0 { 0 } else { self.cumulative[i - 1] };
        let (recording, first, _) = self.ranges[i];
        SegmentSource { recording, start: first + (u - before), length: self.window }
    }
}

/// Sample spans available to pretraining under a split: whole recordings of
/// the training subjects, or the training prefix of each recording for an
/// intrasubject split.
pub fn pretraining_spans<T: Scalar>(recordings: &[Recording<T>], split: &SplitSpec) -> Vec<(usize, usize, usize)> {
    let mut subjects: Vec<u32> = split.train_subject_ids.clone();
    if split.mode == SplitMode::Intrasubject {
        subjects.extend(&split.test_subject_ids);
    }
    recordings
        .iter()
        .enumerate()
        .filter(|(_, r)| subjects.contains(&r.subject_id))
        .map(|(i, r)| match split.mode {
            SplitMode::Intersubject => (i, 0, r.samples()),
            SplitMode::Intrasubject => (i, 0, split.train_boundary(r.samples(), r.sample_rate_hz)),
        })
        .collect()
}

/// Runs steps until `trainer.cfg.steps` are done, drawing two augmented views
/// per sampled window. `on_step` sees every step's metrics; an error from it
/// stops the run.
pub fn pretrain_ssl<T: Scalar, R: Rng + ?Sized>(
    trainer: &mut SslTrainer<T>,
    sampler: &WindowSampler,
    pipeline: &AugmentPipeline,
    ctx: &AugmentContext<'_, T>,
    rng: &mut R,
    mut on_step: impl FnMut(&StepMetrics) -> Result<()>,
) -> Result<()> {
    pipeline.validate()?;
    let b = trainer.cfg.batch_size;
    while trainer.steps_done() < trainer.cfg.steps {
        let mut queries = Vec::with_capacity(b);
        let mut keys = Vec::with_capacity(b);
        let mut subjects = Vec::with_capacity(b);
        for _ in 0..b {
            let src = sampler.draw(rng);
            let mut view = || -> Result<Tensor<T>> {
                let v = apply_pipeline(src, pipeline, ctx, rng)?;
                Ok(if trainer.cfg.mode_center { mode_center_normalize(&v)?.data } else { v.data })
            };
            queries.push(view()?);
            keys.push(view()?);
            subjects.push(ctx.recordings[src.recording].subject_id);
        }
        let metrics = trainer.step(&Tensor::stack(&queries), &Tensor::stack(&keys), &subjects)?;
        on_step(&metrics)?;
    }
    Ok(())
}
