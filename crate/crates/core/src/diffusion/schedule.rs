use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Descending noise levels `sigma_max = s_0 > ... > s_{T-1} = sigma_min`,
/// followed by a terminal 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionSchedule {
    sigmas: Vec<f64>,
}

impl DiffusionSchedule {
    /// Wraps explicit levels; a terminal 0 is appended.
    pub fn from_levels(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Parameter("schedule needs at least one level".into()));
        }
        if levels.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Parameter("noise levels must be finite and positive".into()));
        }
        if levels.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Parameter("noise levels must strictly decrease".into()));
        }
        let mut sigmas = levels;
        sigmas.push(0.0);
        Ok(Self { sigmas })
    }

    /// Number of nonzero levels, i.e. sampler steps.
    pub fn steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    /// All levels including the terminal 0.
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigmas[self.steps() - 1]
    }
}

/// Parameters of a log-spaced schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for ScheduleConfig {
    /// 50 steps from 8 down to e^-5.
    fn default() -> Self {
        Self {
            steps: 50,
            sigma_min: (-5.0f64).exp(),
            sigma_max: 8.0,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        log_schedule(self.steps, self.sigma_min, self.sigma_max)
    }
}

/// `steps` levels evenly spaced in log-sigma from `sigma_max` down to
/// `sigma_min`. Endpoints are stored exactly as given.
pub fn log_schedule(steps: usize, sigma_min: f64, sigma_max: f64) -> Result<DiffusionSchedule> {
    if steps < 2 {
        return Err(Error::Parameter(format!("schedule needs at least 2 steps, got {steps}")));
    }
    if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
        return Err(Error::Parameter(format!(
            "need 0 < sigma_min < sigma_max, got {sigma_min} and {sigma_max}"
        )));
    }
    let (lo, hi) = (sigma_min.ln(), sigma_max.ln());
    let last = (steps - 1) as f64;
    let levels = (0..steps)
        .map(|i| match i {
            0 => sigma_max,
            i if i == steps - 1 => sigma_min,
            i => (hi + (lo - hi) * i as f64 / last).exp(),
        })
        .collect();
    DiffusionSchedule::from_levels(levels)
}
