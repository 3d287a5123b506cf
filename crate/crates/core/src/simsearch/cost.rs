use crate::dsp::{FeatureMatrix, StftConfig};
use crate::error::{Error, Result};
use crate::signal::GapMask;
use crate::simsearch::config::{FeatureKind, FeatureSpec};

/// A feature spec resolved against one gap: its per-frame context weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFeature {
    pub kind: FeatureKind,
    pub alpha: f64,
    pub frame_weights: Vec<f64>,
}

impl WeightedFeature {
    /// Frames with nonzero weight, with their weights.
    pub fn active(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.frame_weights
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, w)| *w > 0.0)
    }
}

/// Context weights of `spec` over the STFT frames of a frame of `mask.n()`
/// samples at `rate`.
///
/// A frame is weighted only when it lies entirely on one side of the gap and
/// its centre is within `context_secs` of the gap boundary. Frames that
/// overlap the gap get zero weight.
pub fn frame_weights(
    spec: &FeatureSpec,
    mask: &GapMask,
    stft: &StftConfig,
    rate: u32,
    context_secs: f64,
) -> Vec<f64> {
    let frames = stft.frame_count(mask.n());
    let context = context_secs * rate as f64;
    let ramp = spec.ramp_secs.unwrap_or(context_secs) * rate as f64;
    let gap_start = mask.start() as f64;
    let gap_end = mask.end() as f64;
    (0..frames)
        .map(|f| {
            let start = f * stft.hop;
            let end = start + stft.window_len;
            let centre = start as f64 + stft.window_len as f64 / 2.0;
            let dist = if end <= mask.start() {
                gap_start - centre
            } else if start > mask.end() {
                centre - gap_end
            } else {
                return 0.0;
            };
            if dist > context {
                0.0
            } else {
                (1.0 - dist / ramp).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// Weighted squared distance between observation frames and candidate
/// frames shifted by `offset`. Frames outside the candidate matrix must carry
/// zero weight; the caller guarantees this.
pub(crate) fn weighted_distance(
    obs: &FeatureMatrix,
    cand: &FeatureMatrix,
    offset: i64,
    spec: &WeightedFeature,
) -> f64 {
    spec.active()
        .map(|(f, w)| {
            let c = cand.frame((f as i64 + offset) as usize);
            let d: f64 = obs
                .frame(f)
                .iter()
                .zip(c)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            w * d
        })
        .sum()
}

/// Similarity cost between aligned per-spec feature matrices:
/// `sum_k alpha_k * sum_t w_k[t] * |obs_k[t] - cand_k[t]|^2`.
pub fn similarity_cost(
    obs: &[FeatureMatrix],
    cand: &[FeatureMatrix],
    specs: &[WeightedFeature],
) -> Result<f64> {
    if obs.len() != specs.len() || cand.len() != specs.len() {
        return Err(Error::Alignment(format!(
            "{} specs but {} observation and {} candidate feature sets",
            specs.len(),
            obs.len(),
            cand.len()
        )));
    }
    let mut total = 0.0;
    for ((o, c), s) in obs.iter().zip(cand).zip(specs) {
        if o.frames() != c.frames() || o.bins() != c.bins() || s.frame_weights.len() != o.frames() {
            return Err(Error::Alignment(format!(
                "frames/bins {}x{} vs {}x{} with {} weights",
                o.frames(),
                o.bins(),
                c.frames(),
                c.bins(),
                s.frame_weights.len()
            )));
        }
        if s.alpha != 0.0 {
            total += s.alpha * weighted_distance(o, c, 0, s);
        }
    }
    Ok(total)
}
