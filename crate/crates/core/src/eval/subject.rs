use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{make_splits, Recording, Segment, SplitSpec, WindowPlan};
use crate::error::{Error, Result};
use crate::nn::Encoder;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{accuracy, embed, fit_probe, ProbeConfig};

/// Which part of each subject's recording trains the subject classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubjectProbeProtocol {
    /// Leading fraction of the timeline trains, the rest tests.
    Intrasubject { train_fraction: f64 },
    /// Fixed leading duration trains, the rest tests.
    LeadingSeconds { seconds: f64 },
}

impl Default for SubjectProbeProtocol {
    fn default() -> Self {
        Self::Intrasubject { train_fraction: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProbeResult {
    /// Percent of test windows assigned to the right subject.
    pub accuracy: f64,
    pub chance: f64,
    pub n_subjects: usize,
    pub n_train: usize,
    pub n_test: usize,
}

/// Fits a linear subject classifier on `train_x` and scores it on `test_x`.
pub fn subject_id_accuracy<T: Scalar, R: Rng + ?Sized>(
    train_x: &Tensor<T>,
    train_ids: &[u32],
    test_x: &Tensor<T>,
    test_ids: &[u32],
    cfg: &ProbeConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut subjects = train_ids.to_vec();
    subjects.sort_unstable();
    subjects.dedup();
    if subjects.len() < 2 {
        return Err(Error::InvalidInput(format!("subject identification needs at least 2 subjects, got {}", subjects.len())));
    }
    let index = |ids: &[u32]| -> Result<Vec<usize>> {
        ids.iter()
            .map(|s| subjects.binary_search(s).map_err(|_| Error::InvalidInput(format!("test subject {s} has no training windows"))))
            .collect()
    };
    let (ytr, yte) = (index(train_ids)?, index(test_ids)?);
    let probe = fit_probe(train_x, &ytr, subjects.len(), cfg, rng)?;
    Ok(accuracy(&probe.predict(test_x)?, &yte))
}

/// Non-overlapping windows of each listed subject, split in time by `protocol`.
pub fn subject_windows<T: Scalar>(
    recordings: &[Recording<T>],
    subjects: &[u32],
    protocol: SubjectProbeProtocol,
    window: usize,
) -> Result<(Vec<Segment<T>>, Vec<Segment<T>>)> {
    let mut spec = SplitSpec::intrasubject(subjects.to_vec());
    match protocol {
        SubjectProbeProtocol::Intrasubject { train_fraction } => spec.train_fraction = train_fraction,
        SubjectProbeProtocol::LeadingSeconds { seconds } => {
            if !(seconds > 0.0) {
                return Err(Error::Config(format!("seconds: must be positive, got {seconds}")));
            }
            spec.train_seconds = Some(seconds);
        }
    }
    make_splits(recordings, &spec, &WindowPlan::Tiled { length: window, stride: window, label: None })
}

/// Subject identification from frozen embeddings.
pub fn subject_id_probe<T: Scalar, R: Rng + ?Sized>(
    encoder: &mut Encoder<T>,
    recordings: &[Recording<T>],
    subjects: &[u32],
    protocol: SubjectProbeProtocol,
    cfg: &ProbeConfig,
    rng: &mut R,
) -> Result<SubjectProbeResult> {
    let (train, test) = subject_windows(recordings, subjects, protocol, encoder.config().window)?;
    if test.is_empty() {
        return Err(Error::InvalidInput("subject probe has no test windows".into()));
    }
    let ids = |s: &[Segment<T>]| s.iter().map(|x| x.subject_id).collect::<Vec<_>>();
    let xtr = embed(encoder, &train, cfg.batch_size)?;
    let xte = embed(encoder, &test, cfg.batch_size)?;
    let acc = subject_id_accuracy(&xtr, &ids(&train), &xte, &ids(&test), cfg, rng)?;
    let mut n: Vec<u32> = ids(&train);
    n.sort_unstable();
    n.dedup();
    Ok(SubjectProbeResult { accuracy: acc, chance: 100.0 / n.len() as f64, n_subjects: n.len(), n_train: train.len(), n_test: test.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::random_tensor;
    use crate::rng::stream;

    fn quick() -> ProbeConfig {
        ProbeConfig { epochs: 30, batch_size: 64, lr: 1e-2, ..ProbeConfig::default() }
    }

    #[test]
    fn one_hot_embeddings_identify_subjects() {
        let ids: Vec<u32> = (0..60).map(|i| [3, 7, 11][i % 3]).collect();
        let x = Tensor::from_vec(
            &[60, 3],
            ids.iter().flat_map(|&s| [3, 7, 11].map(|k| if k == s { 1.0f64 } else { 0.0 })).collect(),
        );
        let acc = subject_id_accuracy(&x, &ids, &x, &ids, &quick(), &mut stream(0, 0)).unwrap();
        assert_eq!(acc, 100.0);
    }

    #[test]
    fn random_embeddings_are_at_chance() {
        let mut rng = stream(1, 0);
        let s = 4;
        let ids = |n: usize| (0..n).map(|i| (i % s) as u32).collect::<Vec<_>>();
        let (xtr, xte) = (random_tensor(&[2000, 16], &mut rng), random_tensor(&[2000, 16], &mut rng));
        let acc = subject_id_accuracy(&xtr, &ids(2000), &xte, &ids(2000), &quick(), &mut rng).unwrap();
        assert!((acc - 100.0 / s as f64).abs() < 5.0, "{acc}");
    }

    #[test]
    fn single_subject_is_rejected() {
        let x = Tensor::<f64>::zeros(&[3, 2]);
        assert!(subject_id_accuracy(&x, &[1, 1, 1], &x, &[1, 1, 1], &quick(), &mut stream(0, 0)).is_err());
    }
}
