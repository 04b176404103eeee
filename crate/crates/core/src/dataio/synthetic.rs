//! Synthetic multi-subject recordings with known class and subject structure.
//!
//! `x[ch, t] = a sin(2 pi f_c t + phi_trial) w_c[ch] + b sin(2 pi g_s t + phi_rec) + sigma n`
//! with `f_c = 10 + 4c` Hz, `g_s = 2 + 0.7s` Hz and a fixed per-class channel mask.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Annotation, LabelKind, Montage, Recording};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub n_subjects: usize,
    pub n_classes: usize,
    pub recs_per_subject: usize,
    /// Samples per recording.
    pub rec_len: usize,
    pub channels: usize,
    pub fs: f64,
    pub seed: u64,
    pub class_amplitude: f64,
    pub subject_amplitude: f64,
    pub noise_std: f64,
    /// Samples per trial; every trial starts with a task annotation.
    pub trial_len: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n_subjects: 8,
            n_classes: 2,
            recs_per_subject: 1,
            rec_len: 160 * 120,
            channels: 8,
            fs: 160.0,
            seed: 0,
            class_amplitude: 1.0,
            subject_amplitude: 1.0,
            noise_std: 0.5,
            trial_len: 640,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_subjects", self.n_subjects),
            ("n_classes", self.n_classes),
            ("recs_per_subject", self.recs_per_subject),
            ("rec_len", self.rec_len),
            ("channels", self.channels),
            ("trial_len", self.trial_len),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("{name}: must be >= 1")));
        }
        if !(self.fs > 0.0) {
            return Err(Error::InvalidInput(format!("fs: must be positive, got {}", self.fs)));
        }
        let amps = [("class_amplitude", self.class_amplitude), ("subject_amplitude", self.subject_amplitude), ("noise_std", self.noise_std)];
        if let Some((name, v)) = amps.iter().find(|(_, v)| !(*v >= 0.0)) {
            return Err(Error::InvalidInput(format!("{name}: must be >= 0, got {v}")));
        }
        Ok(())
    }

    pub fn montage(&self) -> Montage {
        Montage::grid(self.channels)
    }

    pub fn channel_names(&self) -> Vec<String> {
        (0..self.channels).map(|i| format!("ch{i:02}")).collect()
    }
}

pub fn class_frequency_hz(class: usize) -> f64 {
    10.0 + 4.0 * class as f64
}

pub fn subject_frequency_hz(subject: u32) -> f64 {
    2.0 + 0.7 * subject as f64
}

/// Class `c` drives a channel fully when `ch + c` is even, at a fifth otherwise.
fn class_mask(class: usize, ch: usize) -> f64 {
    if (ch + class) % 2 == 0 {
        1.0
    } else {
        0.2
    }
}

pub fn generate_synthetic<T: Scalar>(p: &SyntheticParams) -> Result<Vec<Recording<T>>> {
    p.validate()?;
    let names = p.channel_names();
    let mut out = Vec::with_capacity(p.n_subjects * p.recs_per_subject);
    for s in 0..p.n_subjects {
        for r in 0..p.recs_per_subject {
            let index = (s * p.recs_per_subject + r) as u64;
            let mut rng = rng::stream(p.seed, index);
            let subject = s as u32;
            let g = subject_frequency_hz(subject);
            let rec_phase = rng.random::<f64>() * 2.0 * PI;
            let n_trials = p.rec_len.div_ceil(p.trial_len);
            let trials: Vec<(usize, f64)> =
                (0..n_trials).map(|_| (rng.random_range(0..p.n_classes), rng.random::<f64>() * 2.0 * PI)).collect();
            let mut data = vec![T::zero(); p.channels * p.rec_len];
            for ch in 0..p.channels {
                for t in 0..p.rec_len {
                    let (class, phase) = trials[t / p.trial_len];
                    let time = t as f64 / p.fs;
                    let noise: f64 = rng.sample(StandardNormal);
                    let v = p.class_amplitude * (2.0 * PI * class_frequency_hz(class) * time + phase).sin() * class_mask(class, ch)
                        + p.subject_amplitude * (2.0 * PI * g * time + rec_phase).sin()
                        + p.noise_std * noise;
                    data[ch * p.rec_len + t] = T::lit(v);
                }
            }
            let annotations = trials
                .iter()
                .enumerate()
                .map(|(i, &(class, _))| Annotation { sample_index: i * p.trial_len, kind: LabelKind::Task, value: class as i64 })
                .collect();
            out.push(Recording::new(subject, p.fs, Tensor::from_vec(&[p.channels, p.rec_len], data), names.clone(), annotations)?);
        }
    }
    Ok(out)
}
