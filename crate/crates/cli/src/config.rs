use std::path::{Path, PathBuf};

use sassl::augment::{AugmentPipeline, Transform};
use sassl::contrast::LossConfig;
use sassl::dataio::{LabelKind, SplitSpec, SyntheticParams, WindowPlan};
use sassl::eval::SubjectProbeProtocol;
use sassl::nn::EncoderConfig;
use sassl::train::{FinetuneConfig, PretrainConfig, ProbeConfig};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Desk-scale negative queue; the library default holds 24000 keys.
pub const DESK_QUEUE_CAPACITY: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DatasetConfig {
    /// Generated, written under the run directory, then loaded back like any
    /// other manifest.
    Synthetic(SyntheticParams),
    Manifest {
        path: PathBuf,
        /// JSON map from channel name to `[x, y]`; needed by spatial transforms.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        montage: Option<PathBuf>,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic(SyntheticParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Subtract the channel average at every sample.
    pub rereference: bool,
    /// Per-channel z-scoring with statistics of the training subjects.
    pub zscore: bool,
    /// Mode-centre every segment (ECG).
    pub mode_center: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { rereference: false, zscore: true, mode_center: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pretrain: PretrainConfig,
    pub probe: ProbeConfig,
    pub finetune: FinetuneConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Number of label classes; inferred from the labels when absent.
    pub n_classes: Option<usize>,
    pub class_names: Option<Vec<String>>,
    /// Class indices left out of balanced accuracy.
    pub excluded_classes: Vec<usize>,
    /// Also report subject identification from the frozen encoder.
    pub subject_probe: Option<SubjectProbeProtocol>,
    /// Average embeddings of consecutive same-label windows (ECG rhythm).
    pub rhythm_pool: bool,
    /// Append normalized RR intervals to beat embeddings (ECG beat).
    pub rr_features: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub preprocess: PreprocessConfig,
    /// Defaults to an intrasubject split over every subject in the dataset.
    pub split: Option<SplitSpec>,
    /// How labeled windows are cut for probing, fine-tuning and evaluation.
    pub windows: WindowPlan,
    pub augment: AugmentPipeline,
    pub model: EncoderConfig,
    #[serde(deserialize_with = "loss_over_desk_defaults")]
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub seed: u64,
    pub precision: Precision,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = EncoderConfig::desk(8, 320);
        Self {
            dataset: DatasetConfig::default(),
            preprocess: PreprocessConfig::default(),
            split: None,
            windows: WindowPlan::Tiled { length: model.window, stride: model.window, label: Some(LabelKind::Task) },
            augment: AugmentPipeline::default_eeg(),
            model,
            loss: desk_loss(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
            precision: Precision::F32,
            out: None,
        }
    }
}

fn desk_loss() -> LossConfig {
    LossConfig { queue_capacity: DESK_QUEUE_CAPACITY, ..LossConfig::default() }
}

/// Fields missing from the `loss` section take desk defaults rather than the
/// library's full-scale ones.
fn loss_over_desk_defaults<'de, D: Deserializer<'de>>(d: D) -> Result<LossConfig, D::Error> {
    let given = Value::deserialize(d)?;
    let mut base = serde_json::to_value(desk_loss()).map_err(serde::de::Error::custom)?;
    match (given, &mut base) {
        (Value::Object(fields), Value::Object(b)) => b.extend(fields),
        (other, _) => return Err(serde::de::Error::custom(format!("loss must be an object, got {other}"))),
    }
    serde_json::from_value(base).map_err(serde::de::Error::custom)
}

impl ExperimentConfig {
    /// Parses a config document. Relative dataset paths are resolved against
    /// `base_dir`.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> CliResult<Self> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| CliError::config("config", e.to_string()))?;
        if let (Some(base), DatasetConfig::Manifest { path, montage }) = (base_dir, &mut cfg.dataset) {
            for p in std::iter::once(path).chain(montage.as_mut()) {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent())
    }

    /// Field-level checks that need no data.
    pub fn validate(&self) -> CliResult<()> {
        if let DatasetConfig::Synthetic(p) = &self.dataset {
            p.validate().map_err(|e| CliError::in_section("dataset", e))?;
        }
        if let Some(s) = &self.split {
            if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
                return Err(CliError::config("split.train_fraction", format!("must lie in (0, 1), got {}", s.train_fraction)));
            }
        }
        self.model.validate().map_err(|e| CliError::in_section("model", e))?;
        if self.windows.length() != self.model.window {
            return Err(CliError::config(
                "windows.length",
                format!("{} differs from model.window {}", self.windows.length(), self.model.window),
            ));
        }
        if let WindowPlan::Tiled { stride: 0, .. } = self.windows {
            return Err(CliError::config("windows.stride", "must be positive"));
        }
        self.augment.validate().map_err(|e| CliError::in_section("augment", e))?;
        for s in &self.augment.steps {
            if let Transform::TemporalCutout { window, .. } = s.transform {
                if window > self.model.window {
                    return Err(CliError::config(
                        "augment.temporal_cutout.window",
                        format!("{window} exceeds model.window {}", self.model.window),
                    ));
                }
            }
        }
        self.loss.validate().map_err(|e| CliError::in_section("loss", e))?;
        self.train.pretrain.validate().map_err(|e| CliError::in_section("train.pretrain", e))?;
        if self.train.pretrain.batch_size > self.loss.queue_capacity {
            return Err(CliError::config(
                "train.pretrain.batch_size",
                format!("{} exceeds loss.queue_capacity {}", self.train.pretrain.batch_size, self.loss.queue_capacity),
            ));
        }
        self.train.probe.validate().map_err(|e| CliError::in_section("train.probe", e))?;
        self.train.finetune.validate().map_err(|e| CliError::in_section("train.finetune", e))?;
        if self.eval.n_classes == Some(0) {
            return Err(CliError::config("eval.n_classes", "must be positive"));
        }
        if let (Some(names), Some(n)) = (&self.eval.class_names, self.eval.n_classes) {
            if names.len() != n {
                return Err(CliError::config("eval.class_names", format!("{} names for {n} classes", names.len())));
            }
        }
        if let Some(p) = self.eval.subject_probe {
            let ok = match p {
                SubjectProbeProtocol::Intrasubject { train_fraction } => train_fraction > 0.0 && train_fraction < 1.0,
                SubjectProbeProtocol::LeadingSeconds { seconds } => seconds > 0.0,
            };
            if !ok {
                return Err(CliError::config("eval.subject_probe", format!("invalid protocol {p:?}")));
            }
        }
        if self.eval.rr_features && !matches!(self.windows, WindowPlan::Beats { .. }) {
            return Err(CliError::config("eval.rr_features", "needs beat windows"));
        }
        if self.eval.rr_features && self.eval.rhythm_pool {
            return Err(CliError::config("eval.rhythm_pool", "cannot be combined with rr_features"));
        }
        Ok(())
    }
}
