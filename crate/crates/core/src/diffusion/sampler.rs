use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffusion::schedule::DiffusionSchedule;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Total stochasticity; each step re-noises by a factor
    /// `1 + min(s_churn / T, sqrt(2) - 1)`.
    pub s_churn: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            s_churn: 10.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn gamma(&self, steps: usize) -> f64 {
        if self.s_churn > 0.0 {
            (self.s_churn / steps as f64).min(std::f64::consts::SQRT_2 - 1.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub sigma: f64,
    /// Level after churn, where the step actually starts.
    pub sigma_hat: f64,
    pub sigma_next: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub samples: Vec<f64>,
    pub trace: Vec<StepRecord>,
}

/// `n` i.i.d. draws from `N(0, sigma_max^2)`.
pub fn sample_prior<R: Rng + ?Sized>(n: usize, sigma_max: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma_max * z
        })
        .collect()
}

fn check_finite(v: &[f64], step: usize, sigma: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { step, sigma })
    }
}

/// Draw the initial state from the prior with `cfg.seed`, then integrate.
pub fn heun_stochastic_sample<F>(
    score_fn: F,
    schedule: &DiffusionSchedule,
    cfg: &SamplerConfig,
    n: usize,
) -> Result<SampleOutput>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = sample_prior(n, schedule.sigma_max(), &mut rng);
    integrate(score_fn, schedule, cfg, x, &mut rng)
}

/// Integrate from a given state at `sigma_max`; churn noise is seeded by
/// `cfg.seed`.
pub fn heun_stochastic_sample_from<F>(
    score_fn: F,
    schedule: &DiffusionSchedule,
    cfg: &SamplerConfig,
    x: Vec<f64>,
) -> Result<SampleOutput>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    integrate(score_fn, schedule, cfg, x, &mut rng)
}

fn integrate<F, R>(
    mut score_fn: F,
    schedule: &DiffusionSchedule,
    cfg: &SamplerConfig,
    mut x: Vec<f64>,
    rng: &mut R,
) -> Result<SampleOutput>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    if !(cfg.s_churn >= 0.0 && cfg.s_churn.is_finite()) {
        return Err(Error::Parameter(format!("s_churn must be >= 0, got {}", cfg.s_churn)));
    }
    let steps = schedule.steps();
    let gamma = cfg.gamma(steps);
    let sigmas = schedule.sigmas();
    let mut trace = Vec::with_capacity(steps);

    for i in 0..steps {
        let (sigma, sigma_next) = (sigmas[i], sigmas[i + 1]);
        let sigma_hat = sigma * (1.0 + gamma);
        if sigma_hat > sigma {
            let extra = (sigma_hat * sigma_hat - sigma * sigma).sqrt();
            for v in x.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v += extra * z;
            }
        }

        // dx/dsigma = -sigma * score
        let score = score_fn(&x, sigma_hat)?;
        check_finite(&score, i, sigma_hat)?;
        if score.len() != x.len() {
            return Err(Error::Shape {
                expected: x.len(),
                actual: score.len(),
            });
        }
        let h = sigma_next - sigma_hat;
        let d: Vec<f64> = score.iter().map(|s| -sigma_hat * s).collect();
        let euler: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + h * d).collect();

        x = if sigma_next > 0.0 {
            let score_next = score_fn(&euler, sigma_next)?;
            check_finite(&score_next, i, sigma_next)?;
            x.iter()
                .zip(&d)
                .zip(&score_next)
                .map(|((x, d), s)| x + 0.5 * h * (d - sigma_next * s))
                .collect()
        } else {
            euler
        };
        check_finite(&x, i, sigma_next)?;
        trace.push(StepRecord {
            step: i,
            sigma,
            sigma_hat,
            sigma_next,
        });
    }
    Ok(SampleOutput { samples: x, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::log_schedule;

    fn e5() -> f64 {
        (-5.0f64).exp()
    }

    #[test]
    fn prior_std_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = sample_prior(100_000, 8.0, &mut rng);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((7.9..=8.1).contains(&std), "std {std}");
        assert!(sample_prior(10, 0.0, &mut rng).iter().all(|&x| x == 0.0));
        let a = sample_prior(16, 1.0, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_prior(16, 1.0, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_score_keeps_prior_draw() {
        let s = log_schedule(20, e5(), 8.0).unwrap();
        let cfg = SamplerConfig { s_churn: 0.0, seed: 3 };
        let out = heun_stochastic_sample(|x, _| Ok(vec![0.0; x.len()]), &s, &cfg, 64).unwrap();
        let prior = sample_prior(64, 8.0, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(out.samples, prior);
        assert_eq!(out.trace.len(), 20);
    }

    #[test]
    fn gaussian_prior_maps_to_unit_variance() {
        let s = log_schedule(200, e5(), 8.0).unwrap();
        let cfg = SamplerConfig { s_churn: 0.0, seed: 1 };
        let out = heun_stochastic_sample(
            |x, sigma| Ok(x.iter().map(|v| -v / (1.0 + sigma * sigma)).collect()),
            &s,
            &cfg,
            10_000,
        )
        .unwrap();
        let v = &out.samples;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((0.97..=1.03).contains(&std), "std {std}");
    }

    #[test]
    fn deterministic_without_churn_and_seeded_with_it() {
        let s = log_schedule(30, e5(), 8.0).unwrap();
        let score = |x: &[f64], sigma: f64| Ok(x.iter().map(|v| (0.3 - v) / (0.5 + sigma * sigma)).collect());
        for churn in [0.0, 10.0] {
            let cfg = SamplerConfig { s_churn: churn, seed: 9 };
            let a = heun_stochastic_sample(score, &s, &cfg, 32).unwrap();
            let b = heun_stochastic_sample(score, &s, &cfg, 32).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn churn_raises_step_start() {
        let s = log_schedule(50, e5(), 8.0).unwrap();
        let cfg = SamplerConfig::default();
        assert!((cfg.gamma(50) - 0.2).abs() < 1e-15);
        assert!((SamplerConfig { s_churn: 100.0, seed: 0 }.gamma(50) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        let out = heun_stochastic_sample(|x, _| Ok(vec![0.0; x.len()]), &s, &cfg, 4).unwrap();
        assert!((out.trace[0].sigma_hat - 9.6).abs() < 1e-12);
    }

    #[test]
    fn divergence_names_step() {
        let s = log_schedule(10, e5(), 8.0).unwrap();
        let cfg = SamplerConfig { s_churn: 0.0, seed: 0 };
        let mut calls = 0;
        let err = heun_stochastic_sample(
            |x, _| {
                calls += 1;
                Ok(if calls > 6 { vec![f64::NAN; x.len()] } else { vec![0.0; x.len()] })
            },
            &s,
            &cfg,
            4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 3, .. }), "{err}");
    }
}
