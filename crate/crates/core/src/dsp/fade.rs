use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::signal::AudioSignal;

/// Number of samples spanned by a fade of `fade_ms` at `sample_rate`.
pub fn fade_len(fade_ms: f64, sample_rate: u32) -> usize {
    (fade_ms * sample_rate as f64 / 1000.0).round().max(0.0) as usize
}

/// Equal-gain raised-cosine ramp value for sample `k` of a `width`-sample fade.
pub fn fade_gain(k: usize, width: usize) -> f64 {
    0.5 - 0.5 * (PI * (k as f64 + 0.5) / width as f64).cos()
}

/// Output is `a` before `fade_start`, `b` from `fade_start + width` on, and
/// a raised-cosine blend in between. Both inputs are copied exactly outside
/// the fade.
pub fn crossfade_at(a: &[f64], b: &[f64], fade_start: usize, width: usize) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if fade_start + width > a.len() {
        return Err(Error::Range(format!(
            "fade [{fade_start}, {}) exceeds {} samples",
            fade_start + width,
            a.len()
        )));
    }
    let mut out = Vec::with_capacity(a.len());
    out.extend_from_slice(&a[..fade_start]);
    for k in 0..width {
        let i = fade_start + k;
        out.push(a[i] + fade_gain(k, width) * (b[i] - a[i]));
    }
    out.extend_from_slice(&b[fade_start + width..]);
    Ok(out)
}

/// Splice `a` into `b` with a fade of `fade_ms` centred on `boundary`.
pub fn crossfade_splice(
    a: &AudioSignal,
    b: &AudioSignal,
    boundary: usize,
    fade_ms: f64,
) -> Result<AudioSignal> {
    if a.sample_rate() != b.sample_rate() {
        return Err(Error::Parameter(format!(
            "crossfade inputs differ in rate: {} vs {}",
            a.sample_rate(),
            b.sample_rate()
        )));
    }
    let width = fade_len(fade_ms, a.sample_rate());
    let half = width / 2;
    if boundary < half || boundary > a.len() {
        return Err(Error::Range(format!(
            "fade of {width} samples at boundary {boundary} exceeds {} samples",
            a.len()
        )));
    }
    a.with_samples(crossfade_at(a.samples(), b.samples(), boundary - half, width)?)
}
