use crate::diffusion::Denoiser;
use crate::error::{Error, Result};
use crate::priors::check_dim;

/// Diagonal Gaussian prior `N(mean, diag(var))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        check_dim(mean.len(), var.len())?;
        if mean.is_empty() {
            return Err(Error::Parameter("prior dimension must be at least 1".into()));
        }
        if var.iter().any(|v| !(v.is_finite() && *v > 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Parameter("prior variances must be positive and finite".into()));
        }
        Ok(Self { mean, var })
    }

    pub fn isotropic(n: usize, mean: f64, var: f64) -> Result<Self> {
        Self::new(vec![mean; n], vec![var; n])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    /// Diagonal of `d x0_hat / dx` at noise level `sigma`.
    pub fn jacobian_diag(&self, sigma: f64) -> Vec<f64> {
        let s2 = sigma * sigma;
        self.var.iter().map(|v| v / (v + s2)).collect()
    }
}

impl Denoiser for GaussianPrior {
    fn denoise(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let s2 = sigma * sigma;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((x, m), v)| (v * x + s2 * m) / (v + s2))
            .collect())
    }

    /// Gradient of `log N(x; mean, var + sigma^2)`, computed directly rather
    /// than through the denoiser.
    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let s2 = sigma * sigma;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((x, m), v)| (m - x) / (v + s2))
            .collect())
    }

    fn vjp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), v.len())?;
        Ok(self.jacobian_diag(sigma).iter().zip(v).map(|(j, v)| j * v).collect())
    }

    fn supports_vjp(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!("gaussian(dim={})", self.dim())
    }
}
