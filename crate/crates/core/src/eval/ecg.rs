use std::collections::BTreeMap;

use crate::dataio::{LabelKind, Recording, Segment};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Embeddings averaged into one rhythm vector.
pub const RHYTHM_POOL: usize = 5;

/// Elementwise mean of exactly [`RHYTHM_POOL`] equally long vectors.
pub fn rhythm_pool<T: Scalar>(vectors: &[&[T]]) -> Result<Vec<T>> {
    if vectors.len() != RHYTHM_POOL {
        return Err(Error::InvalidInput(format!("rhythm pooling takes {RHYTHM_POOL} vectors, got {}", vectors.len())));
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Shape("rhythm pooling vectors differ in length".into()));
    }
    let inv = T::one() / T::lit(RHYTHM_POOL as f64);
    Ok((0..d).map(|i| vectors.iter().map(|v| v[i]).sum::<T>() * inv).collect())
}

/// Groups of [`RHYTHM_POOL`] consecutive segments from the same recording
/// and label, in segment order; leftovers are dropped.
pub fn rhythm_groups<T: Scalar>(segments: &[Segment<T>]) -> Vec<[usize; RHYTHM_POOL]> {
    let mut groups = Vec::new();
    let mut run: Vec<usize> = Vec::new();
    for (i, s) in segments.iter().enumerate() {
        let continues = run.last().is_some_and(|&j| {
            let p = &segments[j];
            p.origin.recording == s.origin.recording && p.label == s.label && p.origin.start < s.origin.start
        });
        if !continues {
            run.clear();
        }
        run.push(i);
        if run.len() == RHYTHM_POOL {
            groups.push(std::array::from_fn(|k| run[k]));
            run.clear();
        }
    }
    groups
}

/// Pooled features `[groups, D]` from per-segment features `[N, D]`.
pub fn pool_groups<T: Scalar>(features: &Tensor<T>, groups: &[[usize; RHYTHM_POOL]]) -> Result<Tensor<T>> {
    let d = features.dim(1);
    let mut data = Vec::with_capacity(groups.len() * d);
    for g in groups {
        let rows: Vec<&[T]> = g.iter().map(|&i| features.row(i)).collect();
        data.extend(rhythm_pool(&rows)?);
    }
    Ok(Tensor::from_vec(&[groups.len(), d], data))
}

/// `(rr_prev, rr_next)` for every beat except the first and last, each
/// divided by the mean RR interval of the sequence. Positions must increase.
pub fn rr_features(beat_positions: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = beat_positions.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("RR features need at least 3 beats, got {n}")));
    }
    let rr: Vec<f64> = beat_positions.windows(2).map(|w| w[1] - w[0]).collect();
    if rr.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidInput("beat positions must be strictly increasing".into()));
    }
    let mean = rr.iter().sum::<f64>() / rr.len() as f64;
    Ok(rr.windows(2).map(|w| (w[0] / mean, w[1] / mean)).collect())
}

/// RR features of a recording's beat annotations, keyed by beat sample.
pub fn recording_rr_features<T: Scalar>(r: &Recording<T>) -> Result<BTreeMap<usize, (f64, f64)>> {
    let mut beats: Vec<usize> = r.annotations.iter().filter(|a| a.kind == LabelKind::Beat).map(|a| a.sample_index).collect();
    beats.sort_unstable();
    beats.dedup();
    let pos: Vec<f64> = beats.iter().map(|&b| b as f64).collect();
    let rr = rr_features(&pos)?;
    Ok(beats[1..beats.len() - 1].iter().copied().zip(rr).collect())
}

/// Appends the two RR features to each beat-centred segment's feature row.
/// Returns the widened features and the indices of the segments kept; beats
/// without both neighbours are dropped.
pub fn append_rr_features<T: Scalar>(
    features: &Tensor<T>,
    segments: &[Segment<T>],
    recordings: &[Recording<T>],
) -> Result<(Tensor<T>, Vec<usize>)> {
    let mut tables: BTreeMap<usize, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
    let d = features.dim(1);
    let mut data = Vec::new();
    let mut kept = Vec::new();
    for (i, s) in segments.iter().enumerate() {
        let rec = s.origin.recording;
        if !tables.contains_key(&rec) {
            let r = recordings.get(rec).ok_or_else(|| Error::Range(format!("segment refers to missing recording {rec}")))?;
            tables.insert(rec, recording_rr_features(r)?);
        }
        // beat windows are centred on their beat
        let beat = s.origin.start + s.len() / 2;
        if let Some(&(prev, next)) = tables[&rec].get(&beat) {
            data.extend_from_slice(features.row(i));
            data.push(T::lit(prev));
            data.push(T::lit(next));
            kept.push(i);
        }
    }
    Ok((Tensor::from_vec(&[kept.len(), d + 2], data), kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{beat_windows, Annotation};

    #[test]
    fn pooling_examples() {
        let v = [1.0f64, -2.0, 3.0];
        let same = [&v[..]; 5];
        assert_eq!(rhythm_pool(&same).unwrap(), v.to_vec());
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let zero = [0.0; 3];
        assert_eq!(rhythm_pool(&[&v[..], &neg, &v, &neg, &zero]).unwrap(), vec![0.0; 3]);
        let p = rhythm_pool(&[&v[..], &v, &neg, &zero, &zero]).unwrap();
        for (a, b) in p.iter().zip(v) {
            assert!((a - 0.2 * b).abs() < 1e-15);
        }
        assert!(rhythm_pool(&[&v[..]; 4]).is_err());
    }

    #[test]
    fn rr_examples() {
        assert!(rr_features(&[0.0, 1.0, 2.0, 3.0]).unwrap().iter().all(|&p| p == (1.0, 1.0)));
        let r = rr_features(&[0.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[1].0 - 0.75).abs() < 1e-12 && (r[1].1 - 1.5).abs() < 1e-12);
        assert!(rr_features(&[0.0, 1.0]).is_err());
        let scaled = rr_features(&[0.0, 3.5, 7.0, 14.0]).unwrap();
        for (a, b) in r.iter().zip(&scaled) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn rhythm_groups_stay_within_runs() {
        let seg = |rec: usize, start: usize, label: usize| Segment {
            data: Tensor::<f64>::zeros(&[1, 4]),
            subject_id: 0,
            label: Some(label),
            origin: crate::dataio::SegmentOrigin { recording: rec, start },
        };
        let mut segs: Vec<_> = (0..7).map(|i| seg(0, i * 4, 0)).collect();
        segs.extend((0..6).map(|i| seg(0, 100 + i * 4, 1)));
        segs.extend((0..5).map(|i| seg(1, i * 4, 1)));
        let g = rhythm_groups(&segs);
        assert_eq!(g, vec![[0, 1, 2, 3, 4], [7, 8, 9, 10, 11], [13, 14, 15, 16, 17]]);
    }

    #[test]
    fn rr_columns_follow_beats() {
        let beats = [50usize, 150, 250, 450, 550];
        let ann = beats.iter().map(|&b| Annotation { sample_index: b, kind: LabelKind::Beat, value: 0 }).collect();
        let rec = Recording::new(0, 100.0, Tensor::<f64>::zeros(&[1, 700]), vec!["a".into()], ann).unwrap();
        let segs: Vec<_> = beat_windows(&rec, 0, 40).into_iter().map(|(_, s)| s).collect();
        let feats = Tensor::from_vec(&[segs.len(), 1], (0..segs.len()).map(|i| i as f64).collect());
        let (x, kept) = append_rr_features(&feats, &segs, std::slice::from_ref(&rec)).unwrap();
        assert_eq!(kept, vec![1, 2, 3]);
        // mean RR = 125
        assert_eq!(x.row(1), &[2.0, 0.8, 1.6]);
    }
}
