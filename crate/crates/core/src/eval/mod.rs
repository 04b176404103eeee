//! Metrics, subject-identification probes and ECG feature plumbing.

mod ecg;
mod metrics;
mod subject;

pub use ecg::{append_rr_features, pool_groups, recording_rr_features, rhythm_groups, rhythm_pool, rr_features, RHYTHM_POOL};
pub use metrics::{confusion, metrics_from_confusion, ClassMetrics, ConfusionMatrix, MetricReport};
pub use subject::{subject_id_accuracy, subject_id_probe, subject_windows, SubjectProbeProtocol, SubjectProbeResult};
