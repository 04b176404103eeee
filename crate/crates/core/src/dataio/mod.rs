//! Recordings, segments, the on-disk container, preprocessing, windowing,
//! split protocols and the synthetic subject generator.

mod container;
mod montage;
mod preprocess;
mod split;
mod synthetic;
mod window;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use container::{dataset_hash, load_dataset, load_dataset_with_window, write_dataset, ManifestEntry};
pub use montage::Montage;
pub use preprocess::{histogram_mode, mode_center_normalize, rereference_channel_average, zscore_normalize, DatasetStats};
pub use split::{make_splits, SplitMode, SplitSpec, WindowPlan};
pub use synthetic::{class_frequency_hz, generate_synthetic, subject_frequency_hz, SyntheticParams};
pub use window::{beat_windows, extract_window, label_at, tiled_windows, trial_windows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Beat,
    Rhythm,
    Task,
}

impl LabelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Beat => "beat",
            LabelKind::Rhythm => "rhythm",
            LabelKind::Task => "task",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "beat" => Some(LabelKind::Beat),
            "rhythm" => Some(LabelKind::Rhythm),
            "task" => Some(LabelKind::Task),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Annotation {
    pub sample_index: usize,
    pub kind: LabelKind,
    pub value: i64,
}

/// One subject's continuous multichannel signal, stored channel-major `[C, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording<T> {
    pub subject_id: u32,
    pub sample_rate_hz: f64,
    pub data: Tensor<T>,
    pub channel_names: Vec<String>,
    pub annotations: Vec<Annotation>,
}

impl<T: Scalar> Recording<T> {
    pub fn new(
        subject_id: u32,
        sample_rate_hz: f64,
        data: Tensor<T>,
        channel_names: Vec<String>,
        annotations: Vec<Annotation>,
    ) -> Result<Self> {
        let rec = Self { subject_id, sample_rate_hz, data, channel_names, annotations };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.ndim() != 2 {
            return Err(Error::InvalidInput(format!("recording data must be 2-D, got {:?}", self.data.shape())));
        }
        if self.channels() == 0 || self.samples() == 0 {
            return Err(Error::InvalidInput("recording needs at least one channel and one sample".into()));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!("sample rate must be positive, got {}", self.sample_rate_hz)));
        }
        if self.channel_names.len() != self.channels() {
            return Err(Error::InvalidInput(format!(
                "{} channel names for {} channels",
                self.channel_names.len(),
                self.channels()
            )));
        }
        if let Some(a) = self.annotations.iter().find(|a| a.sample_index >= self.samples()) {
            return Err(Error::InvalidInput(format!(
                "annotation at sample {} outside recording of {} samples",
                a.sample_index,
                self.samples()
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.data.dim(0)
    }

    pub fn samples(&self) -> usize {
        self.data.dim(1)
    }

    pub fn channel(&self, ch: usize) -> &[T] {
        self.data.row(ch)
    }
}

/// Where a segment was cut from: index of the recording in its dataset and start sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentOrigin {
    pub recording: usize,
    pub start: usize,
}

/// Fixed-length window `[C, W]` with its subject and optional label.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T> {
    pub data: Tensor<T>,
    pub subject_id: u32,
    pub label: Option<usize>,
    pub origin: SegmentOrigin,
}

impl<T: Scalar> Segment<T> {
    pub fn channels(&self) -> usize {
        self.data.dim(0)
    }

    pub fn len(&self) -> usize {
        self.data.dim(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, ch: usize) -> &[T] {
        self.data.row(ch)
    }

    pub fn channel_mut(&mut self, ch: usize) -> &mut [T] {
        self.data.row_mut(ch)
    }

    /// Same metadata, new payload.
    pub fn with_data(&self, data: Tensor<T>) -> Self {
        Self { data, subject_id: self.subject_id, label: self.label, origin: self.origin }
    }
}
