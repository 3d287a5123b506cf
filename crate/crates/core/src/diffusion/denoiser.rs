use crate::error::{Error, Result};

/// A Gaussian denoiser `x0_hat(x, sigma) ~ E[x0 | x]` and, through Tweedie's
/// identity, the score `(x0_hat - x) / sigma^2` of the noised density.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>>;

    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        Ok(tweedie_score(x, &self.denoise(x, sigma)?, sigma))
    }

    /// `v^T d x0_hat / dx` at `x`.
    fn vjp(&self, _x: &[f64], _sigma: f64, _v: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Capability("vector-Jacobian product"))
    }

    fn supports_vjp(&self) -> bool {
        false
    }

    fn name(&self) -> String;
}

pub fn tweedie_score(x: &[f64], denoised: &[f64], sigma: f64) -> Vec<f64> {
    let s2 = sigma * sigma;
    x.iter().zip(denoised).map(|(x, d)| (d - x) / s2).collect()
}

pub fn tweedie_denoise(x: &[f64], score: &[f64], sigma: f64) -> Vec<f64> {
    let s2 = sigma * sigma;
    x.iter().zip(score).map(|(x, s)| x + s2 * s).collect()
}
