//! Random bandstop filtering with a cosine-modulated 31-tap Hamming low-pass.

use std::f64::consts::PI;

use rand::Rng;

use crate::dataio::Segment;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const FIR_TAPS: usize = 31;
const CENTER_TAP: usize = FIR_TAPS / 2;

/// Hamming window indexed by offset from the center tap.
fn hamming(m: f64) -> f64 {
    0.54 + 0.46 * (2.0 * PI * m / (FIR_TAPS - 1) as f64).cos()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hamming-windowed sinc low-pass with cutoff `cutoff_hz`. Not renormalized,
/// so a vanishing cutoff gives vanishing taps.
pub fn lowpass_prototype(cutoff_hz: f64, fs: f64) -> [f64; FIR_TAPS] {
    let fc = cutoff_hz / fs;
    std::array::from_fn(|n| {
        let m = n as f64 - CENTER_TAP as f64;
        2.0 * fc * sinc(2.0 * fc * m) * hamming(m)
    })
}

/// Prototype of cutoff `width_hz / 2` shifted to `center_hz` by a cosine with phase `phase`.
pub fn design_bandpass(center_hz: f64, width_hz: f64, fs: f64, phase: f64) -> Result<[f64; FIR_TAPS]> {
    check_band(center_hz, width_hz, fs)?;
    let proto = lowpass_prototype(width_hz / 2.0, fs);
    Ok(std::array::from_fn(|n| {
        let m = n as f64 - CENTER_TAP as f64;
        proto[n] * 2.0 * (2.0 * PI * center_hz * m / fs + phase).cos()
    }))
}

fn check_band(center_hz: f64, width_hz: f64, fs: f64) -> Result<()> {
    let half = width_hz / 2.0;
    if !(fs > 0.0) || !(width_hz >= 0.0) || center_hz < half || center_hz > fs / 2.0 - half {
        return Err(Error::Range(format!(
            "band {center_hz} Hz +/- {half} Hz does not fit in [0, {}] Hz",
            fs / 2.0
        )));
    }
    Ok(())
}

/// Bandstop taps `delta[n - 15] - bandpass[n]` with zero modulation phase.
pub fn design_bandstop(center_hz: f64, width_hz: f64, fs: f64) -> Result<[f64; FIR_TAPS]> {
    design_bandstop_with_phase(center_hz, width_hz, fs, 0.0)
}

pub fn design_bandstop_with_phase(center_hz: f64, width_hz: f64, fs: f64, phase: f64) -> Result<[f64; FIR_TAPS]> {
    let mut taps = design_bandpass(center_hz, width_hz, fs, phase)?;
    taps.iter_mut().for_each(|t| *t = -*t);
    taps[CENTER_TAP] += 1.0;
    Ok(taps)
}

/// Zero-padded "same" convolution with a centered odd-length kernel.
pub fn filter_same<T: Scalar>(x: &[T], taps: &[f64]) -> Vec<T> {
    let half = (taps.len() / 2) as isize;
    let n = x.len() as isize;
    let taps: Vec<T> = taps.iter().map(|&t| T::lit(t)).collect();
    (0..n)
        .map(|i| {
            let mut acc = T::zero();
            for (k, &h) in taps.iter().enumerate() {
                let j = i + half - k as isize;
                if (0..n).contains(&j) {
                    acc += h * x[j as usize];
                }
            }
            acc
        })
        .collect()
}

pub fn apply_fir<T: Scalar>(s: &Segment<T>, taps: &[f64]) -> Segment<T> {
    let (c, w) = (s.channels(), s.len());
    let mut data = Vec::with_capacity(c * w);
    for ch in 0..c {
        data.extend(filter_same(s.channel(ch), taps));
    }
    s.with_data(Tensor::from_vec(&[c, w], data))
}

/// Removes a band of `width_hz` around a center drawn uniformly from
/// `[width/2, fs/2 - width/2]`.
pub fn bandstop<T: Scalar, R: Rng + ?Sized>(s: &Segment<T>, width_hz: f64, fs: f64, rng: &mut R) -> Result<Segment<T>> {
    if !(width_hz >= 0.0 && width_hz < fs / 2.0) {
        return Err(Error::Range(format!("bandstop width {width_hz} Hz must lie in [0, {})", fs / 2.0)));
    }
    let lo = width_hz / 2.0;
    let hi = fs / 2.0 - width_hz / 2.0;
    let center = lo + rng.random::<f64>() * (hi - lo);
    Ok(apply_fir(s, &design_bandstop(center, width_hz, fs)?))
}
