use crate::error::{Error, Result};
use crate::priors::{check_dim, GaussianPrior};
use crate::signal::{GapMask, Observation};

/// Per-dimension Gaussian posterior. Variances may be zero where the
/// observation is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianPosterior {
    /// Score of the posterior diffused to noise level `sigma`,
    /// `(mean - x) / (var + sigma^2)`.
    pub fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_dim(self.mean.len(), x.len())?;
        let s2 = sigma * sigma;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((x, m), v)| (m - x) / (v + s2))
            .collect())
    }
}

/// Exact posterior of a diagonal Gaussian prior given an inpainting
/// observation with measurement noise `noise_sigma`. Observed dimensions
/// combine prior and measurement; gap dimensions keep the prior.
pub fn analytic_inpainting_posterior(
    prior: &GaussianPrior,
    obs: &Observation,
    mask: &GapMask,
    noise_sigma: f64,
) -> Result<GaussianPosterior> {
    check_dim(prior.dim(), obs.n())?;
    mask.check_len(obs.n())?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Parameter(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let y = obs.samples();
    let noise_var = noise_sigma * noise_sigma;
    let (mean, var) = (0..obs.n())
        .map(|i| {
            let (m0, v0) = (prior.mean()[i], prior.var()[i]);
            if mask.is_missing(i) {
                (m0, v0)
            } else if noise_var == 0.0 {
                (y[i], 0.0)
            } else {
                let precision = 1.0 / v0 + 1.0 / noise_var;
                ((m0 / v0 + y[i] / noise_var) / precision, 1.0 / precision)
            }
        })
        .unzip();
    Ok(GaussianPosterior { mean, var })
}
