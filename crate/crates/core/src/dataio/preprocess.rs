use serde::{Deserialize, Serialize};

use super::{Recording, Segment};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MODE_BINS: usize = 101;

/// Subtracts the across-channel mean from every sample column.
pub fn rereference_channel_average<T: Scalar>(r: &Recording<T>) -> Result<Recording<T>> {
    let (c, t) = (r.channels(), r.samples());
    if c < 2 {
        return Err(Error::InvalidInput(format!("channel-average reference needs >= 2 channels, got {c}")));
    }
    let mut out = r.clone();
    let inv_c = T::one() / T::lit(c as f64);
    let data = out.data.as_mut_slice();
    for s in 0..t {
        let mean = (0..c).map(|ch| data[ch * t + s]).sum::<T>() * inv_c;
        for ch in 0..c {
            data[ch * t + s] -= mean;
        }
    }
    Ok(out)
}

/// Per-channel mean and population standard deviation over a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DatasetStats {
    pub fn compute<T: Scalar>(recordings: &[Recording<T>]) -> Result<Self> {
        let first = recordings.first().ok_or_else(|| Error::InvalidInput("no recordings to compute stats".into()))?;
        let c = first.channels();
        let mut sum = vec![0.0f64; c];
        let mut count = 0usize;
        for r in recordings {
            if r.channels() != c {
                return Err(Error::Shape(format!("recordings disagree on channel count ({} vs {c})", r.channels())));
            }
            for (ch, s) in sum.iter_mut().enumerate() {
                *s += r.channel(ch).iter().map(|v| v.to_f64_lossy()).sum::<f64>();
            }
            count += r.samples();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0f64; c];
        for r in recordings {
            for (ch, v) in var.iter_mut().enumerate() {
                *v += r.channel(ch).iter().map(|x| (x.to_f64_lossy() - mean[ch]).powi(2)).sum::<f64>();
            }
        }
        let std = var.iter().map(|v| (v / count as f64).sqrt()).collect();
        let stats = Self { mean, std };
        stats.check()?;
        Ok(stats)
    }

    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    fn check(&self) -> Result<()> {
        if let Some(ch) = self.std.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::InvalidInput(format!("channel {ch} has zero standard deviation")));
        }
        Ok(())
    }
}

pub fn zscore_normalize<T: Scalar>(r: &Recording<T>, stats: &DatasetStats) -> Result<Recording<T>> {
    if stats.mean.len() != r.channels() || stats.std.len() != r.channels() {
        return Err(Error::Shape(format!(
            "stats cover {} channels, recording has {}",
            stats.mean.len(),
            r.channels()
        )));
    }
    stats.check()?;
    let mut out = r.clone();
    for ch in 0..r.channels() {
        let mean = T::lit(stats.mean[ch]);
        let inv = T::one() / T::lit(stats.std[ch]);
        for v in out.data.row_mut(ch) {
            *v = (*v - mean) * inv;
        }
    }
    Ok(out)
}

/// Mode of continuous data: center of the most populated of 101 equal bins
/// over `[min, max]`; ties resolve to the lowest bin. `None` for constant input.
pub fn histogram_mode<T: Scalar>(x: &[T]) -> Option<T> {
    let (lo, hi) = x.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if x.is_empty() || !(hi > lo) {
        return None;
    }
    let width = (hi - lo) / T::lit(MODE_BINS as f64);
    let mut counts = [0usize; MODE_BINS];
    for &v in x {
        let idx = ((v - lo) / width).floor().to_usize().unwrap_or(0).min(MODE_BINS - 1);
        counts[idx] += 1;
    }
    let best = counts.iter().enumerate().fold(0, |best, (i, &n)| if n > counts[best] { i } else { best });
    Some(lo + width * (T::lit(best as f64) + T::lit(0.5)))
}

/// Centers each channel on its histogram mode and scales by the RMS deviation
/// about that mode.
pub fn mode_center_normalize<T: Scalar>(s: &Segment<T>) -> Result<Segment<T>> {
    let mut out = s.clone();
    for ch in 0..s.channels() {
        let row = out.channel_mut(ch);
        let m = histogram_mode(row)
            .ok_or_else(|| Error::DegenerateSegment(format!("channel {ch} is constant")))?;
        let ms = row.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::lit(row.len() as f64);
        let rms = ms.sqrt();
        if !(rms > T::zero()) {
            return Err(Error::DegenerateSegment(format!("channel {ch} has zero spread about its mode")));
        }
        for v in row.iter_mut() {
            *v = (*v - m) / rms;
        }
    }
    Ok(out)
}
