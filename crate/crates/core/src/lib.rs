//! Similarity-guided diffusion posterior sampling for long-gap audio
//! inpainting.
//!
//! A segment resembling the context around the gap is retrieved from a
//! corpus ([`simsearch`]) and used as an auxiliary measurement of the gap.
//! A diffusion sampler ([`diffusion`]) then integrates the probability-flow
//! ODE with a posterior score ([`guidance`]) that pulls the observed samples
//! toward the observation and the gap toward the retrieved guide, each
//! weighted by an adaptive variance. Closed-form denoisers ([`priors`]) make
//! every stage checkable against exact answers; trained denoisers attach
//! through a small binary protocol ([`external`]).

pub mod baselines;
pub mod diffusion;
pub mod dsp;
pub mod error;
pub mod external;
pub mod guidance;
pub mod io;
pub mod priors;
pub mod signal;
pub mod simsearch;

pub use error::{Error, Result};
pub use signal::{apply_mask, null_project, synthetic_measurement, AudioSignal, GapMask, Observation};
