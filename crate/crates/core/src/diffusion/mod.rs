//! Noise schedule, the denoiser contract and the second-order stochastic
//! sampler for the probability-flow ODE `dx/dsigma = -sigma * score(x, sigma)`
//! (noise level and diffusion time are identified, `sigma(tau) = tau`).

mod denoiser;
mod sampler;
mod schedule;

pub use denoiser::{tweedie_denoise, tweedie_score, Denoiser};
pub use sampler::{heun_stochastic_sample, heun_stochastic_sample_from, sample_prior, SampleOutput, SamplerConfig, StepRecord};
pub use schedule::{log_schedule, DiffusionSchedule, ScheduleConfig};
