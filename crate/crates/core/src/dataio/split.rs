use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{beat_windows, tiled_windows, trial_windows, LabelKind, Recording, Segment};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Train and test on disjoint subject sets.
    Intersubject,
    /// Per recording: the leading part of the timeline trains, the rest tests.
    Intrasubject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub train_subject_ids: Vec<u32>,
    #[serde(default)]
    pub test_subject_ids: Vec<u32>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Intrasubject only: fixed training prefix in seconds instead of a fraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_seconds: Option<f64>,
}

fn default_train_fraction() -> f64 {
    0.75
}

impl SplitSpec {
    pub fn intersubject(train: Vec<u32>, test: Vec<u32>) -> Self {
        Self { mode: SplitMode::Intersubject, train_subject_ids: train, test_subject_ids: test, train_fraction: 0.75, train_seconds: None }
    }

    pub fn intrasubject(subjects: Vec<u32>) -> Self {
        Self { mode: SplitMode::Intrasubject, train_subject_ids: subjects, test_subject_ids: Vec::new(), train_fraction: 0.75, train_seconds: None }
    }

    /// First sample of the test part of an intrasubject recording.
    pub fn train_boundary(&self, samples: usize, fs: f64) -> usize {
        match self.train_seconds {
            Some(sec) => ((sec * fs).round() as usize).min(samples),
            None => ((samples as f64) * self.train_fraction).floor() as usize,
        }
    }
}

/// How labeled windows are cut from a recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WindowPlan {
    Tiled { length: usize, stride: usize, label: Option<LabelKind> },
    Trials { length: usize, cue_offset: usize },
    Beats { length: usize },
}

impl WindowPlan {
    pub fn length(&self) -> usize {
        match *self {
            WindowPlan::Tiled { length, .. } | WindowPlan::Trials { length, .. } | WindowPlan::Beats { length } => length,
        }
    }

    fn cut<T: Scalar>(&self, r: &Recording<T>, idx: usize, lo: usize, hi: usize) -> Vec<Segment<T>> {
        let inside = |s: &Segment<T>| s.origin.start >= lo && s.origin.start + s.len() <= hi;
        match *self {
            WindowPlan::Tiled { length, stride, label } => tiled_windows(r, idx, length, stride, lo, hi, label),
            WindowPlan::Trials { length, cue_offset } => {
                trial_windows(r, idx, length, cue_offset).into_iter().filter(inside).collect()
            }
            WindowPlan::Beats { length } => {
                beat_windows(r, idx, length).into_iter().map(|(_, s)| s).filter(inside).collect()
            }
        }
    }
}

/// Splits recordings into train and test segments. Windows straddling an
/// intrasubject boundary are dropped.
pub fn make_splits<T: Scalar>(
    recordings: &[Recording<T>],
    spec: &SplitSpec,
    plan: &WindowPlan,
) -> Result<(Vec<Segment<T>>, Vec<Segment<T>>)> {
    let present: BTreeSet<u32> = recordings.iter().map(|r| r.subject_id).collect();
    let train_ids: BTreeSet<u32> = spec.train_subject_ids.iter().copied().collect();
    let test_ids: BTreeSet<u32> = spec.test_subject_ids.iter().copied().collect();
    if let Some(missing) = train_ids.union(&test_ids).find(|s| !present.contains(s)) {
        return Err(Error::InvalidSplit(format!("subject {missing} not present in the dataset")));
    }
    if train_ids.is_empty() {
        return Err(Error::InvalidSplit("no training subjects".into()));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    match spec.mode {
        SplitMode::Intersubject => {
            if let Some(s) = train_ids.intersection(&test_ids).next() {
                return Err(Error::InvalidSplit(format!("subject {s} is in both train and test sets")));
            }
            if test_ids.is_empty() {
                return Err(Error::InvalidSplit("intersubject split needs test subjects".into()));
            }
            for (i, r) in recordings.iter().enumerate() {
                let segs = || plan.cut(r, i, 0, r.samples());
                if train_ids.contains(&r.subject_id) {
                    train.extend(segs());
                } else if test_ids.contains(&r.subject_id) {
                    test.extend(segs());
                }
            }
        }
        SplitMode::Intrasubject => {
            if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
                return Err(Error::InvalidSplit(format!("train fraction {} not in (0,1)", spec.train_fraction)));
            }
            let subjects: BTreeSet<u32> = train_ids.union(&test_ids).copied().collect();
            for (i, r) in recordings.iter().enumerate().filter(|(_, r)| subjects.contains(&r.subject_id)) {
                let b = spec.train_boundary(r.samples(), r.sample_rate_hz);
                train.extend(plan.cut(r, i, 0, b));
                test.extend(plan.cut(r, i, b, r.samples()));
            }
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn recs(n_subjects: u32, samples: usize) -> Vec<Recording<f32>> {
        (0..n_subjects)
            .map(|s| {
                Recording::new(s, 100.0, Tensor::zeros(&[2, samples]), vec!["a".into(), "b".into()], vec![]).unwrap()
            })
            .collect()
    }

    const PLAN: WindowPlan = WindowPlan::Tiled { length: 100, stride: 100, label: None };

    #[test]
    fn intersubject_partitions_subjects() {
        let r = recs(10, 1000);
        let spec = SplitSpec::intersubject((0..8).collect(), vec![8, 9]);
        let (train, test) = make_splits(&r, &spec, &PLAN).unwrap();
        let tr: BTreeSet<_> = train.iter().map(|s| s.subject_id).collect();
        let te: BTreeSet<_> = test.iter().map(|s| s.subject_id).collect();
        assert!(tr.is_disjoint(&te));
        assert_eq!(tr.len(), 8);
        assert_eq!(te.len(), 2);
    }

    #[test]
    fn intrasubject_respects_boundary() {
        let r = recs(1, 1000);
        let (train, test) = make_splits(&r, &SplitSpec::intrasubject(vec![0]), &PLAN).unwrap();
        assert!(train.iter().all(|s| s.origin.start + 100 <= 750));
        assert!(test.iter().all(|s| s.origin.start >= 750));
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 2);
        let all: BTreeSet<_> = train.iter().chain(&test).map(|s| s.origin).collect();
        assert_eq!(all.len(), train.len() + test.len());
    }

    #[test]
    fn absent_subject_rejected() {
        let r = recs(3, 500);
        let spec = SplitSpec::intersubject(vec![0, 99], vec![1]);
        assert!(matches!(make_splits(&r, &spec, &PLAN), Err(Error::InvalidSplit(_))));
    }

    #[test]
    fn overlapping_subjects_rejected() {
        let r = recs(3, 500);
        let spec = SplitSpec::intersubject(vec![0, 1], vec![1, 2]);
        assert!(matches!(make_splits(&r, &spec, &PLAN), Err(Error::InvalidSplit(_))));
    }

    #[test]
    fn fixed_seconds_prefix() {
        let r = recs(1, 1000);
        let mut spec = SplitSpec::intrasubject(vec![0]);
        spec.train_seconds = Some(3.0);
        let (train, test) = make_splits(&r, &spec, &PLAN).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(test.len(), 7);
    }
}
