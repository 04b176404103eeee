use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Conv1d, GlobalAvgPool, Linear, MaxPool1d};
use super::resblock::ResBlock;
use super::{join, Mode, Module, Slot, SlotMut};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderVariant {
    Eeg,
    Ecg,
}

/// One residual block followed by max pooling of size `pool` (1 = no pooling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub channels: usize,
    pub kernel: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub variant: EncoderVariant,
    pub in_channels: usize,
    pub window: usize,
    pub embed_dim: usize,
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub stages: Vec<StageConfig>,
}

const fn stage(channels: usize, kernel: usize, pool: usize) -> StageConfig {
    StageConfig { channels, kernel, pool }
}

impl EncoderConfig {
    /// 64-channel, 320-sample EEG encoder (about 277k parameters).
    pub fn eeg() -> Self {
        Self {
            variant: EncoderVariant::Eeg,
            in_channels: 64,
            window: 320,
            embed_dim: 256,
            stem_channels: 32,
            stem_kernel: 7,
            stages: vec![stage(32, 7, 4), stage(64, 5, 4), stage(128, 3, 4), stage(128, 3, 1)],
        }
    }

    /// 2-lead, 704-sample ECG encoder (about 968k parameters).
    pub fn ecg() -> Self {
        Self {
            variant: EncoderVariant::Ecg,
            in_channels: 2,
            window: 704,
            embed_dim: 256,
            stem_channels: 32,
            stem_kernel: 7,
            stages: vec![stage(64, 7, 2), stage(128, 5, 2), stage(256, 3, 2), stage(256, 3, 1)],
        }
    }

    /// Narrow version of the EEG stack for CPU-scale experiments: same depth,
    /// kernels and pooling, a quarter of the width.
    pub fn desk(in_channels: usize, window: usize) -> Self {
        Self {
            variant: EncoderVariant::Eeg,
            in_channels,
            window,
            embed_dim: 256,
            stem_channels: 8,
            stem_kernel: 7,
            stages: vec![stage(8, 7, 4), stage(16, 5, 4), stage(32, 3, 4), stage(32, 3, 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.in_channels == 0 || self.window == 0 || self.embed_dim == 0 || self.stem_channels == 0 {
            return bad("encoder sizes must be positive".into());
        }
        if self.stem_kernel == 0 {
            return bad("stem_kernel must be positive".into());
        }
        if self.stages.is_empty() {
            return bad("encoder needs at least one stage".into());
        }
        let mut len = self.window;
        for (i, s) in self.stages.iter().enumerate() {
            if s.channels == 0 || s.kernel == 0 || s.pool == 0 {
                return bad(format!("stages[{i}]: channels, kernel and pool must be positive"));
            }
            len /= s.pool;
            if len == 0 {
                return bad(format!("stages[{i}]: window {} is pooled away", self.window));
            }
        }
        Ok(())
    }

    /// Temporal length entering global average pooling.
    pub fn final_length(&self) -> usize {
        self.stages.iter().fold(self.window, |l, s| l / s.pool)
    }
}

#[derive(Debug, Clone)]
struct Stage<T> {
    block: ResBlock<T>,
    pool: Option<MaxPool1d>,
}

/// Encoder `G`: stem convolution, residual stages, global average pooling and
/// a linear map to the embedding.
#[derive(Debug, Clone)]
pub struct Encoder<T> {
    cfg: EncoderConfig,
    stem: Conv1d<T>,
    stages: Vec<Stage<T>>,
    gap: GlobalAvgPool,
    head: Linear<T>,
}

impl<T: Scalar> Encoder<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let stem = Conv1d::new(cfg.in_channels, cfg.stem_channels, cfg.stem_kernel, rng);
        let mut width = cfg.stem_channels;
        let mut stages = Vec::with_capacity(cfg.stages.len());
        for s in &cfg.stages {
            stages.push(Stage { block: ResBlock::new(width, s.channels, s.kernel, rng), pool: (s.pool > 1).then(|| MaxPool1d::new(s.pool)) });
            width = s.channels;
        }
        let head = Linear::new(width, cfg.embed_dim, rng);
        Ok(Self { cfg: cfg.clone(), stem, stages, gap: GlobalAvgPool::new(), head })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn embed_dim(&self) -> usize {
        self.cfg.embed_dim
    }

    /// `x`: `[batch, channels, window]` → `[batch, embed_dim]`.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let want = [self.cfg.in_channels, self.cfg.window];
        if x.ndim() != 3 || x.shape()[1..] != want {
            return Err(Error::Shape(format!(
                "encoder expects [batch, {}, {}], got {:?}",
                want[0],
                want[1],
                x.shape()
            )));
        }
        let mut h = self.stem.forward(&swap01(x))?;
        for s in &mut self.stages {
            h = s.block.forward(&h, mode)?;
            if let Some(p) = &mut s.pool {
                h = p.forward(&h)?;
            }
        }
        let pooled = self.gap.forward(&h)?;
        self.head.forward(&pooled)
    }

    /// Accumulates parameter gradients from `dh`: `[batch, embed_dim]`.
    pub fn backward(&mut self, dh: &Tensor<T>) {
        let g = self.head.backward(dh);
        let mut g = self.gap.backward(&g);
        for s in self.stages.iter_mut().rev() {
            if let Some(p) = &mut s.pool {
                g = p.backward(&g);
            }
            g = s.block.backward(&g);
        }
        self.stem.backward(&g, false);
    }
}

/// `[a, b, c]` → `[b, a, c]`.
pub(crate) fn swap01<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (a, b, c) = (x.dim(0), x.dim(1), x.dim(2));
    let mut out = Vec::with_capacity(x.len());
    for j in 0..b {
        for i in 0..a {
            out.extend_from_slice(&x.as_slice()[(i * b + j) * c..(i * b + j + 1) * c]);
        }
    }
    Tensor::from_vec(&[b, a, c], out)
}

impl<T: Scalar> Module<T> for Encoder<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        self.stem.visit(&join(prefix, "stem"), f);
        for (i, s) in self.stages.iter().enumerate() {
            s.block.visit(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, SlotMut<'_, T>)) {
        self.stem.visit_mut(&join(prefix, "stem"), f);
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.block.visit_mut(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
