//! Closed-form denoisers for priors whose MMSE estimate is known exactly,
//! and the exact Gaussian inpainting posterior.

mod gaussian;
mod gmm;
mod patch;
mod posterior;

pub use gaussian::GaussianPrior;
pub use gmm::{GmmComponent, GmmPrior};
pub use patch::PatchDenoiser;
pub use posterior::{analytic_inpainting_posterior, GaussianPosterior};

use crate::error::{Error, Result};

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Shape { expected, actual });
    }
    Ok(())
}
