use crate::diffusion::Denoiser;
use crate::error::Result;
use crate::priors::GmmPrior;

/// Applies a mixture prior over consecutive non-overlapping blocks of a long
/// signal, treating blocks as independent draws. A trailing partial block
/// uses the mixture's marginal over its leading dimensions.
#[derive(Debug, Clone)]
pub struct PatchDenoiser {
    prior: GmmPrior,
}

impl PatchDenoiser {
    pub fn new(prior: GmmPrior) -> Self {
        Self { prior }
    }

    pub fn block(&self) -> usize {
        self.prior.dim()
    }

    pub fn prior(&self) -> &GmmPrior {
        &self.prior
    }

    fn blockwise<F>(&self, x: &[f64], mut f: F) -> Result<Vec<f64>>
    where
        F: FnMut(&GmmPrior, std::ops::Range<usize>) -> Result<Vec<f64>>,
    {
        let b = self.block();
        let full = x.len() / b * b;
        let mut out = Vec::with_capacity(x.len());
        for start in (0..full).step_by(b) {
            out.extend(f(&self.prior, start..start + b)?);
        }
        if full < x.len() {
            let tail = self.prior.truncated(x.len() - full)?;
            out.extend(f(&tail, full..x.len())?);
        }
        Ok(out)
    }
}

impl Denoiser for PatchDenoiser {
    fn denoise(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        self.blockwise(x, |p, r| p.denoise(&x[r], sigma))
    }

    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        self.blockwise(x, |p, r| p.score(&x[r], sigma))
    }

    fn vjp(&self, x: &[f64], sigma: f64, v: &[f64]) -> Result<Vec<f64>> {
        crate::priors::check_dim(x.len(), v.len())?;
        self.blockwise(x, |p, r| p.vjp(&x[r.clone()], sigma, &v[r]))
    }

    fn supports_vjp(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!("patch-{}", self.prior.name())
    }
}
