//! Likelihood scores that steer the sampler toward the observation and the
//! retrieved guide.
//!
//! With `x0 = x0_hat(x, sigma)` from the denoiser, the guidance gradient is
//!
//! ```text
//! -grad_x [ |M (y - x0)|^2 / var_y  +  |(I - M)(guide - x0)|^2 / var_aux ]
//!   = J^T [ 2 M (y - x0) / var_y  +  2 (I - M)(guide - x0) / var_aux ]
//! ```
//!
//! where `J = d x0 / dx`. Each variance is set per evaluation from its own
//! residual, `var = sigma * |r| / (omega * sqrt(n))`, and held constant while
//! differentiating. Setting an omega to zero removes its term.

use serde::{Deserialize, Serialize};

use crate::diffusion::{heun_stochastic_sample, tweedie_score, DiffusionSchedule, Denoiser, SampleOutput, SamplerConfig};
use crate::error::{Error, Result};
use crate::signal::Observation;

/// How `J^T v` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    /// Exact vector-Jacobian product from the denoiser.
    ExactVjp,
    /// `J ~ I`, for black-box denoisers without derivatives.
    IdentityJacobian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Residual-scaled variances (the normal mode).
    Adaptive,
    /// Constant variances for oracle tests. The omegas still switch terms on
    /// and off but do not scale them.
    Fixed { y: f64, aux: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub omega_y: f64,
    pub omega_aux: f64,
    pub grad_mode: GradMode,
    pub variance: VarianceMode,
}

impl GuidanceConfig {
    pub const OMEGA_Y: f64 = 0.3;
    /// Low-uncertainty guide weighting.
    pub const OMEGA_AUX_LOW: f64 = 0.15;
    /// High-uncertainty guide weighting.
    pub const OMEGA_AUX_HIGH: f64 = 0.04;

    pub fn with_omega_aux(omega_aux: f64) -> Self {
        Self {
            omega_y: Self::OMEGA_Y,
            omega_aux,
            grad_mode: GradMode::ExactVjp,
            variance: VarianceMode::Adaptive,
        }
    }

    pub fn dps() -> Self {
        Self::with_omega_aux(0.0)
    }

    pub fn simdps_l() -> Self {
        Self::with_omega_aux(Self::OMEGA_AUX_LOW)
    }

    pub fn simdps_h() -> Self {
        Self::with_omega_aux(Self::OMEGA_AUX_HIGH)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("omega_y", self.omega_y), ("omega_aux", self.omega_aux)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        if let VarianceMode::Fixed { y, aux } = self.variance {
            if !(y > 0.0 && aux > 0.0) {
                return Err(Error::Parameter("fixed variances must be positive".into()));
            }
        }
        Ok(())
    }
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self::simdps_l()
    }
}

/// Everything the likelihood needs besides the current state.
#[derive(Clone, Copy)]
pub struct GuidanceState<'a> {
    pub obs: &'a Observation,
    pub guide: Option<&'a [f64]>,
    pub denoiser: &'a dyn Denoiser,
}

impl<'a> GuidanceState<'a> {
    pub fn new(
        obs: &'a Observation,
        guide: Option<&'a [f64]>,
        denoiser: &'a dyn Denoiser,
    ) -> Result<Self> {
        if let Some(g) = guide {
            obs.mask.check_len(g.len())?;
        }
        Ok(Self {
            obs,
            guide,
            denoiser,
        })
    }

    fn check(&self, x: &[f64], cfg: &GuidanceConfig, with_aux: bool) -> Result<()> {
        cfg.validate()?;
        self.obs.mask.check_len(x.len())?;
        if with_aux && cfg.omega_aux > 0.0 && self.guide.is_none() {
            return Err(Error::Parameter("omega_aux > 0 requires a guide signal".into()));
        }
        if cfg.grad_mode == GradMode::ExactVjp && !self.denoiser.supports_vjp() {
            return Err(Error::Capability(
                "exact-vjp guidance needs a denoiser with vector-Jacobian products",
            ));
        }
        Ok(())
    }
}

/// `sigma * |r| / (omega * sqrt(n))`.
pub fn adaptive_variance(residual_norm: f64, sigma: f64, omega: f64, n: usize) -> Result<f64> {
    if !(omega > 0.0) || n == 0 {
        return Err(Error::Parameter(format!(
            "adaptive variance needs omega > 0 and n >= 1, got {omega} and {n}"
        )));
    }
    Ok(sigma * residual_norm / (omega * (n as f64).sqrt()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `2 / var` for a residual, or `None` when the term is switched off or the
/// residual is exactly zero.
fn term_coefficient(residual: &[f64], sigma: f64, omega: f64, fixed: Option<f64>) -> Result<Option<f64>> {
    if omega == 0.0 {
        return Ok(None);
    }
    let var = match fixed {
        Some(v) => v,
        None => adaptive_variance(norm(residual), sigma, omega, residual.len())?,
    };
    Ok((var > 0.0).then(|| 2.0 / var))
}

fn likelihood_from_denoised(
    x: &[f64],
    sigma: f64,
    denoised: &[f64],
    state: &GuidanceState<'_>,
    cfg: &GuidanceConfig,
    with_aux: bool,
) -> Result<Vec<f64>> {
    let mask = &state.obs.mask;
    let y = state.obs.samples();
    let (fixed_y, fixed_aux) = match cfg.variance {
        VarianceMode::Adaptive => (None, None),
        VarianceMode::Fixed { y, aux } => (Some(y), Some(aux)),
    };

    let mut pull = vec![0.0; x.len()];
    let residual_y: Vec<f64> = (0..x.len())
        .map(|i| if mask.is_missing(i) { 0.0 } else { y[i] - denoised[i] })
        .collect();
    if let Some(c) = term_coefficient(&residual_y, sigma, cfg.omega_y, fixed_y)? {
        pull.iter_mut().zip(&residual_y).for_each(|(p, r)| *p += c * r);
    }

    if with_aux && cfg.omega_aux > 0.0 {
        let guide = state.guide.ok_or(Error::Parameter("omega_aux > 0 requires a guide signal".into()))?;
        let residual_aux: Vec<f64> = (0..x.len())
            .map(|i| if mask.is_missing(i) { guide[i] - denoised[i] } else { 0.0 })
            .collect();
        if let Some(c) = term_coefficient(&residual_aux, sigma, cfg.omega_aux, fixed_aux)? {
            pull.iter_mut().zip(&residual_aux).for_each(|(p, r)| *p += c * r);
        }
    }

    match cfg.grad_mode {
        GradMode::IdentityJacobian => Ok(pull),
        GradMode::ExactVjp => {
            if pull.iter().all(|&p| p == 0.0) {
                Ok(pull)
            } else {
                state.denoiser.vjp(x, sigma, &pull)
            }
        }
    }
}

/// Likelihood score of the observation alone.
pub fn dps_likelihood_score(
    x: &[f64],
    sigma: f64,
    state: &GuidanceState<'_>,
    cfg: &GuidanceConfig,
) -> Result<Vec<f64>> {
    state.check(x, cfg, false)?;
    let denoised = state.denoiser.denoise(x, sigma)?;
    likelihood_from_denoised(x, sigma, &denoised, state, cfg, false)
}

/// Likelihood score of the synthetic measurement: the observation term plus
/// the guide term on the gap.
pub fn simdps_likelihood_score(
    x: &[f64],
    sigma: f64,
    state: &GuidanceState<'_>,
    cfg: &GuidanceConfig,
) -> Result<Vec<f64>> {
    state.check(x, cfg, true)?;
    let denoised = state.denoiser.denoise(x, sigma)?;
    likelihood_from_denoised(x, sigma, &denoised, state, cfg, true)
}

pub fn posterior_score(prior_score: &[f64], likelihood_score: &[f64]) -> Result<Vec<f64>> {
    if prior_score.len() != likelihood_score.len() {
        return Err(Error::Shape {
            expected: prior_score.len(),
            actual: likelihood_score.len(),
        });
    }
    Ok(prior_score.iter().zip(likelihood_score).map(|(p, l)| p + l).collect())
}

/// Prior score (by Tweedie from one denoiser call) plus the SimDPS
/// likelihood score; the score function handed to the sampler.
pub fn guided_score(
    x: &[f64],
    sigma: f64,
    state: &GuidanceState<'_>,
    cfg: &GuidanceConfig,
) -> Result<Vec<f64>> {
    state.check(x, cfg, true)?;
    let denoised = state.denoiser.denoise(x, sigma)?;
    let prior = tweedie_score(x, &denoised, sigma);
    let likelihood = likelihood_from_denoised(x, sigma, &denoised, state, cfg, true)?;
    posterior_score(&prior, &likelihood)
}

/// Runs the guided sampler and splices the result into the observation:
/// observed samples come from `y`, the gap from the sample.
pub fn guided_sample(
    state: &GuidanceState<'_>,
    cfg: &GuidanceConfig,
    schedule: &DiffusionSchedule,
    sampler: &SamplerConfig,
) -> Result<(Vec<f64>, SampleOutput)> {
    let n = state.obs.n();
    let out = heun_stochastic_sample(|x, sigma| guided_score(x, sigma, state, cfg), schedule, sampler, n)?;
    let mut spliced = state.obs.samples().to_vec();
    let gap = state.obs.mask.gap_range();
    spliced[gap.clone()].copy_from_slice(&out.samples[gap]);
    Ok((spliced, out))
}
