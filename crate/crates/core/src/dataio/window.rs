use super::{LabelKind, Recording, Segment, SegmentOrigin};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Value of the latest annotation of `kind` at or before `sample`.
pub fn label_at<T: Scalar>(r: &Recording<T>, kind: LabelKind, sample: usize) -> Option<usize> {
    r.annotations
        .iter()
        .filter(|a| a.kind == kind && a.sample_index <= sample)
        .max_by_key(|a| a.sample_index)
        .and_then(|a| usize::try_from(a.value).ok())
}

/// Exact slice `[start, start + length)` of every channel.
pub fn extract_window<T: Scalar>(
    r: &Recording<T>,
    recording_index: usize,
    start: usize,
    length: usize,
    label_kind: Option<LabelKind>,
) -> Result<Segment<T>> {
    let t = r.samples();
    if length == 0 || start.checked_add(length).is_none_or(|end| end > t) {
        return Err(Error::Range(format!("window [{start}, {start}+{length}) outside recording of {t} samples")));
    }
    let c = r.channels();
    let mut data = Vec::with_capacity(c * length);
    for ch in 0..c {
        data.extend_from_slice(&r.channel(ch)[start..start + length]);
    }
    Ok(Segment {
        data: Tensor::from_vec(&[c, length], data),
        subject_id: r.subject_id,
        label: label_kind.and_then(|k| label_at(r, k, start)),
        origin: SegmentOrigin { recording: recording_index, start },
    })
}

/// One window per task cue, starting `cue_offset` samples after the cue.
/// Cues whose window would run past the recording end are skipped.
pub fn trial_windows<T: Scalar>(
    r: &Recording<T>,
    recording_index: usize,
    length: usize,
    cue_offset: usize,
) -> Vec<Segment<T>> {
    r.annotations
        .iter()
        .filter(|a| a.kind == LabelKind::Task)
        .filter_map(|a| {
            let mut seg = extract_window(r, recording_index, a.sample_index + cue_offset, length, None).ok()?;
            seg.label = usize::try_from(a.value).ok();
            Some(seg)
        })
        .collect()
}

/// Windows centered on beat annotations, paired with the beat's ordinal among
/// the recording's beats.
pub fn beat_windows<T: Scalar>(r: &Recording<T>, recording_index: usize, length: usize) -> Vec<(usize, Segment<T>)> {
    let mut beats: Vec<_> = r.annotations.iter().filter(|a| a.kind == LabelKind::Beat).collect();
    beats.sort_by_key(|a| a.sample_index);
    beats
        .iter()
        .enumerate()
        .filter_map(|(ordinal, a)| {
            let start = a.sample_index.checked_sub(length / 2)?;
            let mut seg = extract_window(r, recording_index, start, length, None).ok()?;
            seg.label = usize::try_from(a.value).ok();
            Some((ordinal, seg))
        })
        .collect()
}

/// Windows of `length` with `stride`, fully contained in `[lo, hi)`.
pub fn tiled_windows<T: Scalar>(
    r: &Recording<T>,
    recording_index: usize,
    length: usize,
    stride: usize,
    lo: usize,
    hi: usize,
    label_kind: Option<LabelKind>,
) -> Vec<Segment<T>> {
    let hi = hi.min(r.samples());
    let stride = stride.max(1);
    let mut out = Vec::new();
    let mut start = lo;
    while start + length <= hi {
        if let Ok(seg) = extract_window(r, recording_index, start, length, label_kind) {
            out.push(seg);
        }
        start += stride;
    }
    out
}
