//! Stochastic signal transforms used to build the two contrastive views.

mod filter;
mod sensor;
mod spatial;
mod temporal;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{extract_window, Montage, Recording, Segment};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use filter::{
    apply_fir, bandstop, design_bandpass, design_bandstop, design_bandstop_with_phase, filter_same, lowpass_prototype,
    FIR_TAPS,
};
pub use sensor::{sensor_cutout, sensor_dropout, sensors_within};
pub use spatial::{rotate_coords, spatial_warp, RbfInterpolator, WarpKind};
pub use temporal::{gaussian_noise, signal_mix, temporal_cutout, temporal_delay, temporal_delay_circular, CutoutFill};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    TemporalCutout {
        window: usize,
        #[serde(default)]
        fill: CutoutFill,
    },
    TemporalDelay {
        max_delay: usize,
    },
    GaussianNoise {
        scale: f64,
    },
    Bandstop {
        width_hz: f64,
    },
    SignalMix {
        scale: f64,
    },
    SpatialRotation {
        degrees: f64,
    },
    SpatialShift {
        distance: f64,
    },
    SensorDropout {
        p: f64,
    },
    SensorCutout {
        radius: f64,
    },
    Identity,
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::TemporalCutout { .. } => "temporal_cutout",
            Transform::TemporalDelay { .. } => "temporal_delay",
            Transform::GaussianNoise { .. } => "gaussian_noise",
            Transform::Bandstop { .. } => "bandstop",
            Transform::SignalMix { .. } => "signal_mix",
            Transform::SpatialRotation { .. } => "spatial_rotation",
            Transform::SpatialShift { .. } => "spatial_shift",
            Transform::SensorDropout { .. } => "sensor_dropout",
            Transform::SensorCutout { .. } => "sensor_cutout",
            Transform::Identity => "identity",
        }
    }

    pub fn is_spatial(&self) -> bool {
        matches!(self, Transform::SpatialRotation { .. } | Transform::SpatialShift { .. } | Transform::SensorCutout { .. })
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Config(format!("{}: {what}", self.name())));
        match *self {
            Transform::GaussianNoise { scale } | Transform::SignalMix { scale } if !(scale >= 0.0) => {
                bad(format!("scale {scale} must be >= 0"))
            }
            Transform::Bandstop { width_hz } if !(width_hz >= 0.0) => bad(format!("width {width_hz} must be >= 0")),
            Transform::SpatialRotation { degrees } if !(degrees >= 0.0) => bad(format!("degrees {degrees} must be >= 0")),
            Transform::SpatialShift { distance } if !(distance >= 0.0) => bad(format!("distance {distance} must be >= 0")),
            Transform::SensorDropout { p } if !(0.0..=1.0).contains(&p) => bad(format!("p {p} outside [0,1]")),
            Transform::SensorCutout { radius } if !(radius >= 0.0) => bad(format!("radius {radius} must be >= 0")),
            _ => Ok(()),
        }
    }
}

/// A transform and the probability that it fires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    #[serde(flatten)]
    pub transform: Transform,
    #[serde(default = "always")]
    pub probability: f64,
}

fn always() -> f64 {
    1.0
}

impl AugmentSpec {
    pub fn new(transform: Transform, probability: f64) -> Self {
        Self { transform, probability }
    }
}

/// Ordered transforms, each fired independently.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AugmentPipeline {
    pub steps: Vec<AugmentSpec>,
}

impl AugmentPipeline {
    pub fn new(steps: Vec<AugmentSpec>) -> Self {
        Self { steps }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// Best single-transform settings, each applied with probability 0.5.
    pub fn default_eeg() -> Self {
        let p = 0.5;
        Self::new(vec![
            AugmentSpec::new(Transform::TemporalCutout { window: 200, fill: CutoutFill::Noise }, p),
            AugmentSpec::new(Transform::TemporalDelay { max_delay: 40 }, p),
            AugmentSpec::new(Transform::GaussianNoise { scale: 6.0 }, p),
            AugmentSpec::new(Transform::Bandstop { width_hz: 64.0 }, p),
            AugmentSpec::new(Transform::SignalMix { scale: 0.9 }, p),
            AugmentSpec::new(Transform::SensorDropout { p: 0.2 }, p),
            AugmentSpec::new(Transform::SensorCutout { radius: 0.25 }, p),
        ])
    }

    /// [`Self::default_eeg`] without the spatial transforms.
    pub fn default_ecg() -> Self {
        Self::new(Self::default_eeg().steps.into_iter().filter(|s| !s.transform.is_spatial()).collect())
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.steps {
            if !(0.0..=1.0).contains(&s.probability) {
                return Err(Error::Config(format!("{}: probability {} outside [0,1]", s.transform.name(), s.probability)));
            }
            s.transform.validate()?;
        }
        Ok(())
    }

    pub fn max_delay(&self) -> usize {
        self.steps
            .iter()
            .filter_map(|s| match s.transform {
                Transform::TemporalDelay { max_delay } if s.probability > 0.0 => Some(max_delay),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    fn draw_firing<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        self.steps
            .iter()
            .map(|s| match s.probability {
                p if p >= 1.0 => true,
                p if p <= 0.0 => false,
                p => rng.random::<f64>() < p,
            })
            .collect()
    }
}

/// Everything a transform may need beyond the segment itself.
#[derive(Debug, Clone, Copy)]
pub struct AugmentContext<'a, T> {
    /// Pool for re-cropping and for drawing mixing partners.
    pub recordings: &'a [Recording<T>],
    pub fs: f64,
    pub montage: Option<&'a Montage>,
    /// Per-channel reference std for additive noise; unit when absent.
    pub std_ref: Option<&'a [f64]>,
}

impl<'a, T: Scalar> AugmentContext<'a, T> {
    pub fn new(recordings: &'a [Recording<T>], fs: f64) -> Self {
        Self { recordings, fs, montage: None, std_ref: None }
    }

    pub fn with_montage(mut self, montage: &'a Montage) -> Self {
        self.montage = Some(montage);
        self
    }

    /// A window of the same length from a uniformly drawn recording and offset.
    fn draw_partner<R: Rng + ?Sized>(&self, like: &Segment<T>, rng: &mut R) -> Result<Segment<T>> {
        let w = like.len();
        let candidates: Vec<usize> = (0..self.recordings.len())
            .filter(|&i| self.recordings[i].samples() >= w && self.recordings[i].channels() == like.channels())
            .collect();
        if candidates.is_empty() {
            return Err(Error::InvalidInput("no recording can supply a mixing partner".into()));
        }
        let idx = candidates[rng.random_range(0..candidates.len())];
        let r = &self.recordings[idx];
        let start = rng.random_range(0..=r.samples() - w);
        extract_window(r, idx, start, w, None)
    }

    fn montage(&self) -> Result<&'a Montage> {
        self.montage.ok_or_else(|| Error::InvalidInput("spatial transform needs a montage".into()))
    }
}

/// Window to cut from the context's recordings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentSource {
    pub recording: usize,
    pub start: usize,
    pub length: usize,
}

/// Applies one transform unconditionally. Temporal delay falls back to a
/// circular shift because only the segment is available here.
pub fn apply_transform<T: Scalar, R: Rng + ?Sized>(
    s: &Segment<T>,
    transform: &Transform,
    ctx: &AugmentContext<'_, T>,
    rng: &mut R,
) -> Result<Segment<T>> {
    match *transform {
        Transform::TemporalCutout { window, fill } => {
            let partner = if fill == CutoutFill::Mix && window > 0 { Some(ctx.draw_partner(s, rng)?) } else { None };
            temporal_cutout(s, window, fill, partner.as_ref(), rng)
        }
        Transform::TemporalDelay { max_delay } => Ok(temporal_delay_circular(s, max_delay, rng)),
        Transform::GaussianNoise { scale } => gaussian_noise(s, scale, ctx.std_ref, rng),
        Transform::Bandstop { width_hz } => bandstop(s, width_hz, ctx.fs, rng),
        Transform::SignalMix { scale } => {
            if scale == 0.0 {
                return Ok(s.clone());
            }
            let partner = ctx.draw_partner(s, rng)?;
            signal_mix(s, &partner, scale)
        }
        Transform::SpatialRotation { degrees } => spatial_warp(s, ctx.montage()?, WarpKind::Rotation, degrees, rng),
        Transform::SpatialShift { distance } => spatial_warp(s, ctx.montage()?, WarpKind::Shift, distance, rng),
        Transform::SensorDropout { p } => sensor_dropout(s, p, rng),
        Transform::SensorCutout { radius } => sensor_cutout(s, ctx.montage()?, radius, rng),
        Transform::Identity => Ok(s.clone()),
    }
}

/// Cuts the source window and applies the pipeline.
///
/// Firing decisions are drawn first, in listed order. A firing temporal delay
/// acts at extraction as crop-offset jitter; the remaining transforms then run
/// in listed order.
pub fn apply_pipeline<T: Scalar, R: Rng + ?Sized>(
    source: SegmentSource,
    pipeline: &AugmentPipeline,
    ctx: &AugmentContext<'_, T>,
    rng: &mut R,
) -> Result<Segment<T>> {
    let rec = ctx
        .recordings
        .get(source.recording)
        .ok_or_else(|| Error::Range(format!("recording {} not in pool", source.recording)))?;
    let fires = pipeline.draw_firing(rng);
    let delay = pipeline.steps.iter().zip(&fires).find_map(|(s, &f)| match s.transform {
        Transform::TemporalDelay { max_delay } if f => Some(max_delay),
        _ => None,
    });
    let mut seg = match delay {
        Some(max_delay) => temporal_delay(rec, source.recording, source.start, source.length, max_delay, rng)?,
        None => extract_window(rec, source.recording, source.start, source.length, None)?,
    };
    for (spec, _) in pipeline.steps.iter().zip(&fires).filter(|(_, &f)| f) {
        if !matches!(spec.transform, Transform::TemporalDelay { .. }) {
            seg = apply_transform(&seg, &spec.transform, ctx, rng)?;
        }
    }
    Ok(seg)
}

/// Pipeline over an already extracted segment; delays become circular shifts.
pub fn apply_pipeline_to_segment<T: Scalar, R: Rng + ?Sized>(
    s: &Segment<T>,
    pipeline: &AugmentPipeline,
    ctx: &AugmentContext<'_, T>,
    rng: &mut R,
) -> Result<Segment<T>> {
    let fires = pipeline.draw_firing(rng);
    let mut seg = s.clone();
    for (spec, _) in pipeline.steps.iter().zip(&fires).filter(|(_, &f)| f) {
        seg = apply_transform(&seg, &spec.transform, ctx, rng)?;
    }
    Ok(seg)
}
