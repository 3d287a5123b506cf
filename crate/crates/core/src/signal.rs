//! Signal containers and the single-gap masking operator.
//!
//! The mask `M` is diagonal and binary; it is stored as an inclusive index
//! interval `[start, end]` and every operator below is an O(n) range
//! operation over the samples. `(I - M)` is the orthogonal projector onto the
//! gap (the kernel of `M`).

use std::ops::RangeInclusive;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidSignal("signal has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Same rate, new samples. Fails if the new samples violate the invariants.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate)
    }

    /// Copy of `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Range(format!(
                "slice [{start}, {end}) outside signal of {} samples",
                self.len()
            )));
        }
        Self::new(self.samples[start..end].to_vec(), self.sample_rate)
    }
}

/// A single missing interval `[start, end]` (inclusive) in a frame of `n`
/// samples. The mask value is 0 inside the interval and 1 elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapMask {
    n: usize,
    start: usize,
    end: usize,
}

impl GapMask {
    pub fn from_interval(n: usize, start: usize, end: usize) -> Result<Self> {
        if start > end || end >= n {
            return Err(Error::InvalidInterval { n, start, end });
        }
        Ok(Self { n, start, end })
    }

    /// Gap of `gap_len` samples centred in a frame of `n` samples.
    pub fn centred(n: usize, gap_len: usize) -> Result<Self> {
        if gap_len == 0 || gap_len > n {
            return Err(Error::InvalidInterval {
                n,
                start: 0,
                end: gap_len.saturating_sub(1),
            });
        }
        let start = (n - gap_len) / 2;
        Self::from_interval(n, start, start + gap_len - 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    /// Nominal gap length `end - start`.
    pub fn nominal_len(&self) -> usize {
        self.end - self.start
    }

    /// Number of missing samples, `end - start + 1`.
    pub fn gap_samples(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn gap_range(&self) -> RangeInclusive<usize> {
        self.start..=self.end
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    /// Mask value `m_i`.
    pub fn value(&self, i: usize) -> f64 {
        if self.is_missing(i) {
            0.0
        } else {
            1.0
        }
    }

    /// The diagonal of `M` as a dense vector.
    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::Shape {
                expected: self.n,
                actual: len,
            });
        }
        Ok(())
    }

    /// `M z`: zero the gap, copy everything else.
    pub fn mask(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z.len())?;
        let mut out = z.to_vec();
        out[self.start..=self.end].fill(0.0);
        Ok(out)
    }

    /// `(I - M) z`: keep the gap, zero everything else.
    pub fn project_null(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z.len())?;
        let mut out = vec![0.0; self.n];
        out[self.start..=self.end].copy_from_slice(&z[self.start..=self.end]);
        Ok(out)
    }

    /// Re-express the gap on a frame sampled at a different rate. The scaled
    /// interval covers every target sample that touches the original gap and
    /// is widened by `margin` on both sides, clamped to the new frame.
    pub fn rescaled(&self, new_n: usize, ratio: f64, margin: usize) -> Result<Self> {
        let start = ((self.start as f64 * ratio).floor() as usize).saturating_sub(margin);
        let end = ((self.end as f64 * ratio).ceil() as usize + margin).min(new_n.saturating_sub(1));
        Self::from_interval(new_n, start.min(end), end)
    }
}

/// A masked observation `y = M (x + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: AudioSignal,
    pub mask: GapMask,
    pub noise_sigma: f64,
}

impl Observation {
    /// Wraps an already-masked signal. The gap must be exactly zero.
    pub fn new(y: AudioSignal, mask: GapMask, noise_sigma: f64) -> Result<Self> {
        mask.check_len(y.len())?;
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "measurement noise sigma must be finite and >= 0, got {noise_sigma}"
            )));
        }
        if y.samples()[mask.gap_range()].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidSignal(
                "observation has nonzero samples inside the gap".into(),
            ));
        }
        Ok(Self {
            y,
            mask,
            noise_sigma,
        })
    }

    pub fn n(&self) -> usize {
        self.mask.n()
    }

    pub fn sample_rate(&self) -> u32 {
        self.y.sample_rate()
    }

    pub fn samples(&self) -> &[f64] {
        self.y.samples()
    }
}

/// Observe `x` through the mask with additive Gaussian noise of std `noise_sigma`.
pub fn apply_mask<R: Rng + ?Sized>(
    x: &AudioSignal,
    mask: &GapMask,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Observation> {
    mask.check_len(x.len())?;
    let mut y = x.samples().to_vec();
    if noise_sigma > 0.0 {
        for v in y.iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v += noise_sigma * e;
        }
    }
    y[mask.gap_range()].fill(0.0);
    Observation::new(x.with_samples(y)?, *mask, noise_sigma)
}

/// `(I - M) z` as a signal.
pub fn null_project(z: &AudioSignal, mask: &GapMask) -> Result<AudioSignal> {
    z.with_samples(mask.project_null(z.samples())?)
}

/// Synthetic measurement `M y + (I - M) guide`: observed samples from `y`,
/// gap samples from the guide.
pub fn synthetic_measurement(
    obs: &Observation,
    guide: &AudioSignal,
    mask: &GapMask,
) -> Result<AudioSignal> {
    mask.check_len(obs.y.len())?;
    mask.check_len(guide.len())?;
    let mut out = obs.y.samples().to_vec();
    out[mask.gap_range()].copy_from_slice(&guide.samples()[mask.gap_range()]);
    obs.y.with_samples(out)
}
