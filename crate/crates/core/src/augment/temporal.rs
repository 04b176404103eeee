use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{extract_window, Recording, Segment};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// What fills a temporal cutout region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoutFill {
    Zeros,
    #[default]
    Noise,
    /// The same region of another segment.
    Mix,
}

/// Replaces one contiguous region of `window_len` samples across all channels.
/// `other` is required for [`CutoutFill::Mix`].
pub fn temporal_cutout<T: Scalar, R: Rng + ?Sized>(
    s: &Segment<T>,
    window_len: usize,
    fill: CutoutFill,
    other: Option<&Segment<T>>,
    rng: &mut R,
) -> Result<Segment<T>> {
    let w = s.len();
    if window_len > w {
        return Err(Error::Range(format!("cutout window {window_len} exceeds segment length {w}")));
    }
    if window_len == 0 {
        return Ok(s.clone());
    }
    let start = rng.random_range(0..=w - window_len);
    let mut out = s.clone();
    match fill {
        CutoutFill::Zeros => {
            for ch in 0..s.channels() {
                out.channel_mut(ch)[start..start + window_len].fill(T::zero());
            }
        }
        CutoutFill::Noise => {
            for ch in 0..s.channels() {
                for v in &mut out.channel_mut(ch)[start..start + window_len] {
                    *v = T::lit(rng.sample::<f64, _>(StandardNormal));
                }
            }
        }
        CutoutFill::Mix => {
            let other = other.ok_or_else(|| Error::InvalidInput("mix-filled cutout needs a second segment".into()))?;
            if other.data.shape() != s.data.shape() {
                return Err(Error::Shape(format!("cutout source {:?} vs {:?}", other.data.shape(), s.data.shape())));
            }
            for ch in 0..s.channels() {
                out.channel_mut(ch)[start..start + window_len].copy_from_slice(&other.channel(ch)[start..start + window_len]);
            }
        }
    }
    Ok(out)
}

/// Re-crops the recording at `base_start + d`, `d` uniform in `[-max_delay, max_delay]`.
pub fn temporal_delay<T: Scalar, R: Rng + ?Sized>(
    r: &Recording<T>,
    recording_index: usize,
    base_start: usize,
    length: usize,
    max_delay: usize,
    rng: &mut R,
) -> Result<Segment<T>> {
    if base_start < max_delay || base_start + length + max_delay > r.samples() {
        return Err(Error::Range(format!(
            "delay margin {max_delay} does not fit around [{base_start}, {}) in {} samples",
            base_start + length,
            r.samples()
        )));
    }
    let d = rng.random_range(0..=2 * max_delay) as isize - max_delay as isize;
    extract_window(r, recording_index, (base_start as isize + d) as usize, length, None)
}

/// Circular-shift stand-in for [`temporal_delay`] when only the segment is
/// available. Approximate: wrapped samples did not follow each other in time.
pub fn temporal_delay_circular<T: Scalar, R: Rng + ?Sized>(s: &Segment<T>, max_delay: usize, rng: &mut R) -> Segment<T> {
    let w = s.len();
    let d = rng.random_range(0..=2 * max_delay) as isize - max_delay as isize;
    let shift = d.rem_euclid(w.max(1) as isize) as usize;
    let mut out = s.clone();
    for ch in 0..s.channels() {
        out.channel_mut(ch).rotate_right(shift);
    }
    out
}

/// Adds `scale * std_ref[ch] * N(0,1)` to every sample; `std_ref` defaults to 1.
pub fn gaussian_noise<T: Scalar, R: Rng + ?Sized>(
    s: &Segment<T>,
    scale: f64,
    std_ref: Option<&[f64]>,
    rng: &mut R,
) -> Result<Segment<T>> {
    if !(scale >= 0.0) {
        return Err(Error::Range(format!("noise scale {scale} must be >= 0")));
    }
    if let Some(sr) = std_ref {
        if sr.len() != s.channels() {
            return Err(Error::Shape(format!("{} reference stds for {} channels", sr.len(), s.channels())));
        }
    }
    let mut out = s.clone();
    if scale == 0.0 {
        return Ok(out);
    }
    for ch in 0..s.channels() {
        let sigma = scale * std_ref.map_or(1.0, |sr| sr[ch]);
        for v in out.channel_mut(ch) {
            *v += T::lit(sigma * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok(out)
}

/// `s + scale * other`.
pub fn signal_mix<T: Scalar>(s: &Segment<T>, other: &Segment<T>, scale: f64) -> Result<Segment<T>> {
    if other.data.shape() != s.data.shape() {
        return Err(Error::Shape(format!("mix source {:?} vs {:?}", other.data.shape(), s.data.shape())));
    }
    let mut data = s.data.clone();
    data.axpy(T::lit(scale), &other.data);
    Ok(s.with_data(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::SegmentOrigin;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_segment(c: usize, w: usize, seed: u64) -> Segment<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..c * w).map(|_| rng.random_range(1.0..2.0)).collect();
        Segment { data: Tensor::from_vec(&[c, w], data), subject_id: 0, label: None, origin: SegmentOrigin { recording: 0, start: 0 } }
    }

    fn recording(t: usize) -> Recording<f64> {
        let data = (0..2 * t).map(|i| i as f64).collect();
        Recording::new(1, 160.0, Tensor::from_vec(&[2, t], data), vec!["a".into(), "b".into()], vec![]).unwrap()
    }

    #[test]
    fn cutout_zero_length_is_identity() {
        let s = random_segment(4, 50, 0);
        let out = temporal_cutout(&s, 0, CutoutFill::Noise, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn cutout_zeros_exactly_window_per_channel() {
        let s = random_segment(64, 320, 0);
        let out = temporal_cutout(&s, 200, CutoutFill::Zeros, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut first = None;
        for ch in 0..64 {
            let zeros: Vec<usize> = (0..320).filter(|&t| out.channel(ch)[t] == 0.0).collect();
            assert_eq!(zeros.len(), 200);
            assert_eq!(zeros[199] - zeros[0], 199, "contiguous");
            assert_eq!(*first.get_or_insert(zeros[0]), zeros[0], "same region on every channel");
            for t in (0..320).filter(|t| !zeros.contains(t)) {
                assert_eq!(out.channel(ch)[t], s.channel(ch)[t]);
            }
        }
    }

    #[test]
    fn cutout_noise_has_unit_variance() {
        let s = random_segment(64, 320, 0);
        let out = temporal_cutout(&s, 200, CutoutFill::Noise, None, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        // inputs lie in [1,2), replaced samples are the only ones that differ
        let mut masked = Vec::new();
        for ch in 0..64 {
            for t in 0..320 {
                if out.channel(ch)[t] != s.channel(ch)[t] {
                    masked.push(out.channel(ch)[t]);
                }
            }
        }
        assert_eq!(masked.len(), 200 * 64);
        let mean = masked.iter().sum::<f64>() / masked.len() as f64;
        let var = masked.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / masked.len() as f64;
        assert!((var - 1.0).abs() < 0.3, "var {var}");
    }

    #[test]
    fn cutout_mix_copies_other() {
        let s = random_segment(2, 30, 0);
        let o = random_segment(2, 30, 1);
        let out = temporal_cutout(&s, 30, CutoutFill::Mix, Some(&o), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.data, o.data);
        assert!(temporal_cutout(&s, 3, CutoutFill::Mix, None, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn cutout_longer_than_segment_rejected() {
        let s = random_segment(1, 10, 0);
        assert!(matches!(temporal_cutout(&s, 11, CutoutFill::Zeros, None, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::Range(_))));
    }

    #[test]
    fn delay_zero_equals_window() {
        let r = recording(1000);
        let a = temporal_delay(&r, 0, 100, 320, 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a, extract_window(&r, 0, 100, 320, None).unwrap());
    }

    #[test]
    fn delay_is_exact_recrop() {
        let r = recording(1000);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let s = temporal_delay(&r, 0, 200, 320, 40, &mut rng).unwrap();
            let start = s.origin.start;
            assert!((160..=240).contains(&start));
            assert_eq!(s, extract_window(&r, 0, start, 320, None).unwrap());
        }
    }

    #[test]
    fn delay_margin_enforced() {
        let r = recording(1000);
        assert!(temporal_delay(&r, 0, 10, 320, 40, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(temporal_delay(&r, 0, 1000 - 320 - 10, 320, 40, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn circular_delay_preserves_values() {
        let s = random_segment(2, 16, 3);
        let out = temporal_delay_circular(&s, 4, &mut ChaCha8Rng::seed_from_u64(0));
        let mut a = s.channel(0).to_vec();
        let mut b = out.channel(0).to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn noise_statistics() {
        let s = random_segment(64, 320, 0);
        assert_eq!(gaussian_noise(&s, 0.0, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), s);
        let out = gaussian_noise(&s, 6.0, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let diff: Vec<f64> = out.data.as_slice().iter().zip(s.data.as_slice()).map(|(a, b)| a - b).collect();
        let n = diff.len() as f64;
        let mean = diff.iter().sum::<f64>() / n;
        let std = (diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 6.0).abs() / 6.0 < 0.05, "std {std}");
        // the mean of 20480 draws at std 6 has standard error 0.042
        assert!(mean.abs() < 0.15, "mean {mean}");
        let unit = gaussian_noise(&s, 1.0, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let m1 = unit.data.as_slice().iter().zip(s.data.as_slice()).map(|(a, b)| a - b).sum::<f64>() / n;
        assert!(m1.abs() < 0.1, "unit-scale mean {m1}");
    }

    #[test]
    fn noise_scales_with_reference_std() {
        let s = random_segment(2, 4000, 0);
        let out = gaussian_noise(&s, 1.0, Some(&[0.0, 3.0]), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.channel(0), s.channel(0));
        let d: Vec<f64> = out.channel(1).iter().zip(s.channel(1)).map(|(a, b)| a - b).collect();
        let std = (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt();
        assert!((std - 3.0).abs() < 0.15);
    }

    #[test]
    fn mix_examples() {
        let s = random_segment(3, 8, 0);
        let o = random_segment(3, 8, 1);
        assert_eq!(signal_mix(&s, &o, 0.0).unwrap(), s);
        let out = signal_mix(&s, &o, 0.9).unwrap();
        for ((x, y), z) in out.data.as_slice().iter().zip(s.data.as_slice()).zip(o.data.as_slice()) {
            assert!(((x - y) - 0.9 * z).abs() <= 1e-15 * (y.abs() + z.abs()));
        }
        let neg = s.with_data(s.data.map(|v| -v));
        assert!(signal_mix(&s, &neg, 1.0).unwrap().data.as_slice().iter().all(|&v| v == 0.0));
        assert!(signal_mix(&s, &random_segment(2, 8, 0), 1.0).is_err());
    }
}
