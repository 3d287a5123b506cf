use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    StftMag,
    Chroma,
}

/// One feature space in the similarity cost.
///
/// Frame weights fall linearly from 1 at the gap boundary to 0 at
/// `ramp_secs` away from it (measured to the frame centre), mirrored on both
/// sides of the gap. `None` ramps over the whole context length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub alpha: f64,
    pub ramp_secs: Option<f64>,
}

impl FeatureSpec {
    pub fn stft(alpha: f64, ramp_secs: f64) -> Self {
        Self {
            kind: FeatureKind::StftMag,
            alpha,
            ramp_secs: Some(ramp_secs),
        }
    }

    pub fn chroma(alpha: f64) -> Self {
        Self {
            kind: FeatureKind::Chroma,
            alpha,
            ramp_secs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Rate at which features are computed and the coarse scan runs.
    pub search_rate: u32,
    /// Context length on each side of the gap, seconds.
    pub context_secs: f64,
    /// Coarse grid spacing in samples at the search rate; must be a
    /// multiple of the STFT hop.
    pub coarse_hop: usize,
    pub stft: StftConfig,
    pub tuning_ref: f64,
    pub specs: Vec<FeatureSpec>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            search_rate: 12_000,
            context_secs: 3.0,
            coarse_hop: 256,
            stft: StftConfig::default(),
            tuning_ref: 440.0,
            specs: vec![FeatureSpec::stft(1.0, 0.75), FeatureSpec::chroma(1.0)],
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.search_rate == 0 {
            return Err(Error::Parameter("search rate must be positive".into()));
        }
        if !(self.context_secs > 0.0 && self.context_secs.is_finite()) {
            return Err(Error::Parameter("context length must be positive".into()));
        }
        if self.coarse_hop == 0 || !self.coarse_hop.is_multiple_of(self.stft.hop) {
            return Err(Error::Parameter(format!(
                "coarse hop {} must be a positive multiple of the STFT hop {}",
                self.coarse_hop, self.stft.hop
            )));
        }
        if self.specs.is_empty() {
            return Err(Error::Parameter("at least one feature spec is required".into()));
        }
        for s in &self.specs {
            if !(s.alpha >= 0.0 && s.alpha.is_finite()) {
                return Err(Error::Parameter(format!("alpha must be finite and >= 0, got {}", s.alpha)));
            }
            if let Some(r) = s.ramp_secs {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(Error::Parameter(format!("ramp length must be positive, got {r}")));
                }
            }
        }
        Ok(())
    }

    /// Coarse grid spacing in feature frames.
    pub fn frame_step(&self) -> usize {
        self.coarse_hop / self.stft.hop
    }
}
