//! Run configuration: a TOML file with documented keys, overridable from
//! the command line.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use simdps_core::diffusion::ScheduleConfig;
use simdps_core::guidance::{GradMode, GuidanceConfig, VarianceMode};
use simdps_core::io::WavFormat;
use simdps_core::simsearch::SearchConfig;
use simdps_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Diffusion posterior sampling from the observation only.
    Dps,
    /// Guided sampling, low guide uncertainty.
    SimdpsL,
    /// Guided sampling, high guide uncertainty.
    SimdpsH,
    /// Retrieved segment inserted with short fades.
    Sim,
    /// Autoregressive extrapolation from both sides.
    Lpc,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Dps, Method::SimdpsL, Method::SimdpsH, Method::Sim, Method::Lpc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dps => "dps",
            Method::SimdpsL => "simdps-l",
            Method::SimdpsH => "simdps-h",
            Method::Sim => "sim",
            Method::Lpc => "lpc",
        }
    }

    pub fn is_diffusion(self) -> bool {
        matches!(self, Method::Dps | Method::SimdpsL | Method::SimdpsH)
    }

    pub fn preset_omega_aux(self) -> f64 {
        match self {
            Method::SimdpsL => GuidanceConfig::OMEGA_AUX_LOW,
            Method::SimdpsH => GuidanceConfig::OMEGA_AUX_HIGH,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the denoiser comes from. Serialized as `gaussian-demo`,
/// `gmm-demo`, or an endpoint URI (`stdio:<command>`, `tcp:<host>:<port>`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DenoiserSource {
    GaussianDemo,
    GmmDemo,
    External(String),
}

impl FromStr for DenoiserSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-demo" => Ok(Self::GaussianDemo),
            "gmm-demo" => Ok(Self::GmmDemo),
            uri if uri.starts_with("stdio:") || uri.starts_with("tcp:") => Ok(Self::External(uri.to_string())),
            other => Err(Error::Parameter(format!(
                "unknown denoiser {other:?}; expected gaussian-demo, gmm-demo, stdio:<command> or tcp:<host>:<port>"
            ))),
        }
    }
}

impl TryFrom<String> for DenoiserSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DenoiserSource> for String {
    fn from(d: DenoiserSource) -> String {
        d.to_string()
    }
}

impl fmt::Display for DenoiserSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GaussianDemo => f.write_str("gaussian-demo"),
            Self::GmmDemo => f.write_str("gmm-demo"),
            Self::External(uri) => f.write_str(uri),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapConfig {
    /// Gap start within the excerpt; centred when absent.
    pub start_secs: Option<f64>,
    pub duration_secs: f64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            start_secs: None,
            duration_secs: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub s_churn: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self { s_churn: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceSettings {
    pub omega_y: f64,
    /// Guide weight; the method's preset when absent.
    pub omega_aux: Option<f64>,
    /// Exact VJP when the denoiser supports it, identity otherwise, when absent.
    pub grad_mode: Option<GradMode>,
}

impl Default for GuidanceSettings {
    fn default() -> Self {
        Self {
            omega_y: GuidanceConfig::OMEGA_Y,
            omega_aux: None,
            grad_mode: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserSettings {
    pub source: DenoiserSource,
    /// Patch length of the demo mixture prior.
    pub patch: usize,
    pub components: usize,
    pub iterations: usize,
    /// Per-request timeout for external denoisers.
    pub timeout_ms: u64,
}

impl Default for DenoiserSettings {
    fn default() -> Self {
        Self {
            source: DenoiserSource::GmmDemo,
            patch: 32,
            components: 8,
            iterations: 20,
            timeout_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub method: Method,
    pub working_rate: u32,
    pub excerpt_offset_secs: f64,
    pub excerpt_secs: f64,
    pub gap: GapConfig,
    pub search: SearchConfig,
    pub schedule: ScheduleConfig,
    pub sampler: SamplerSettings,
    pub guidance: GuidanceSettings,
    pub denoiser: DenoiserSettings,
    pub lpc_order: usize,
    pub output_format: WavFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            method: Method::SimdpsL,
            working_rate: 44_100,
            excerpt_offset_secs: 0.0,
            excerpt_secs: 6.0,
            gap: GapConfig::default(),
            search: SearchConfig::default(),
            schedule: ScheduleConfig::default(),
            sampler: SamplerSettings::default(),
            guidance: GuidanceSettings::default(),
            denoiser: DenoiserSettings::default(),
            lpc_order: 256,
            output_format: WavFormat::Pcm16,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parameter(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn omega_aux(&self) -> f64 {
        self.guidance.omega_aux.unwrap_or_else(|| self.method.preset_omega_aux())
    }

    /// Whether the run needs a retrieved guide.
    pub fn needs_guide(&self) -> bool {
        match self.method {
            Method::Sim => true,
            Method::Lpc => false,
            _ => self.omega_aux() > 0.0,
        }
    }

    pub fn guidance_config(&self, denoiser_has_vjp: bool) -> GuidanceConfig {
        let grad_mode = self.guidance.grad_mode.unwrap_or(if denoiser_has_vjp {
            GradMode::ExactVjp
        } else {
            GradMode::IdentityJacobian
        });
        GuidanceConfig {
            omega_y: self.guidance.omega_y,
            omega_aux: self.omega_aux(),
            grad_mode,
            variance: VarianceMode::Adaptive,
        }
    }

    /// Copy with every defaulted choice written out, as echoed in reports.
    pub fn resolved(&self, denoiser_has_vjp: Option<bool>) -> Self {
        let mut out = self.clone();
        out.guidance.omega_aux = Some(self.omega_aux());
        if let Some(vjp) = denoiser_has_vjp {
            out.guidance.grad_mode = Some(self.guidance_config(vjp).grad_mode);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        self.schedule.build()?;
        if self.working_rate == 0 {
            return Err(Error::Parameter("working_rate must be positive".into()));
        }
        if !(self.excerpt_secs > 0.0 && self.excerpt_offset_secs >= 0.0) {
            return Err(Error::Parameter("excerpt length must be positive and offset >= 0".into()));
        }
        if !(self.gap.duration_secs > 0.0) {
            return Err(Error::Parameter("gap duration must be positive".into()));
        }
        if let Some(s) = self.gap.start_secs {
            if !(s >= 0.0) {
                return Err(Error::Parameter("gap start must be >= 0".into()));
            }
        }
        if !(self.sampler.s_churn >= 0.0 && self.sampler.s_churn.is_finite()) {
            return Err(Error::Parameter("s_churn must be finite and >= 0".into()));
        }
        self.guidance_config(true).validate()?;
        if self.lpc_order == 0 {
            return Err(Error::Parameter("lpc_order must be at least 1".into()));
        }
        if self.denoiser.patch == 0 || self.denoiser.components == 0 {
            return Err(Error::Parameter("denoiser patch and components must be positive".into()));
        }
        Ok(())
    }
}
