use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::AudioSignal;

/// Short-time Fourier transform framing. Frames start at sample 0 and
/// advance by `hop`; there is no centring or padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub window_len: usize,
    pub fft_size: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 1024,
            fft_size: 1024,
            hop: 256,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window_len || self.window_len > self.fft_size {
            return Err(Error::Parameter(format!(
                "STFT needs 0 < hop <= window_len <= fft_size, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of full frames in a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            1 + (len - self.window_len) / self.hop
        }
    }

    /// Periodic Hann window.
    pub fn window(&self) -> Vec<f64> {
        let n = self.window_len as f64;
        (0..self.window_len)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
            .collect()
    }
}

/// Time-major nonnegative feature matrix (`frames x bins`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    frames: usize,
    bins: usize,
    frame_rate: f64,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, frames: usize, bins: usize, frame_rate: f64) -> Result<Self> {
        if data.len() != frames * bins {
            return Err(Error::Shape {
                expected: frames * bins,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidSignal(
                "feature entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            data,
            frames,
            bins,
            frame_rate,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, f: usize) -> f64 {
        self.data[t * self.bins + f]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

pub fn stft_magnitude(x: &AudioSignal, cfg: &StftConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    let samples = x.samples();
    if samples.len() < cfg.window_len {
        return Err(Error::TooShort {
            len: samples.len(),
            window: cfg.window_len,
        });
    }
    let frames = cfg.frame_count(samples.len());
    let bins = cfg.bins();
    let window = cfg.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let start = t * cfg.hop;
        buf.fill(Complex::new(0.0, 0.0));
        for (i, (s, w)) in samples[start..start + cfg.window_len]
            .iter()
            .zip(&window)
            .enumerate()
        {
            buf[i].re = s * w;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    FeatureMatrix::new(
        data,
        frames,
        bins,
        x.sample_rate() as f64 / cfg.hop as f64,
    )
}
