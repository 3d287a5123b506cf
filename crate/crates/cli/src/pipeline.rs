//! One inpainting run from prepared audio to output and report.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simdps_core::baselines::{ar_inpaint, gap_metrics, sim_inpaint};
use simdps_core::diffusion::{Denoiser, SamplerConfig};
use simdps_core::dsp::resample;
use simdps_core::external::ExternalDenoiser;
use simdps_core::guidance::{guided_sample, GuidanceState};
use simdps_core::priors::{GaussianPrior, GmmPrior, PatchDenoiser};
use simdps_core::simsearch::{search, CandidateMatch, Corpus};
use simdps_core::{apply_mask, AudioSignal, Error, GapMask, Observation};

use crate::config::{DenoiserSource, Method, RunConfig};
use crate::report::{InputSummary, RunReport, SearchSummary, Timing};

/// A library error tagged with the pipeline stage it came from.
#[derive(Debug, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn is_external(&self) -> bool {
        matches!(self.source, Error::Transport(_))
    }
}

pub trait AtStage<T> {
    fn at(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T> AtStage<T> for simdps_core::Result<T> {
    fn at(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

fn to_rate(x: &AudioSignal, rate: u32) -> simdps_core::Result<AudioSignal> {
    if x.sample_rate() == rate {
        Ok(x.clone())
    } else {
        resample(x, rate)
    }
}

fn secs_to_samples(secs: f64, rate: u32) -> usize {
    (secs * rate as f64).round() as usize
}

/// The excerpt, its gap and the masked observation at the working rate.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub excerpt: AudioSignal,
    pub obs: Observation,
    pub offset: usize,
}

impl Prepared {
    pub fn mask(&self) -> &GapMask {
        &self.obs.mask
    }
}

/// Crops the configured excerpt from `input` (resampled to the working rate)
/// and masks the gap.
pub fn prepare(cfg: &RunConfig, input: &AudioSignal) -> simdps_core::Result<Prepared> {
    let rate = cfg.working_rate;
    let x = to_rate(input, rate)?;
    let excerpt = crop(cfg, &x)?;
    let n = excerpt.len();
    let gap_len = secs_to_samples(cfg.gap.duration_secs, rate).max(1);
    let mask = match cfg.gap.start_secs {
        None => GapMask::centred(n, gap_len)?,
        Some(s) => {
            let start = secs_to_samples(s, rate);
            GapMask::from_interval(n, start, start + gap_len - 1)?
        }
    };
    let obs = apply_mask(&excerpt, &mask, 0.0, &mut ChaCha8Rng::seed_from_u64(0))?;
    Ok(Prepared {
        excerpt,
        obs,
        offset: secs_to_samples(cfg.excerpt_offset_secs, rate),
    })
}

fn crop(cfg: &RunConfig, x: &AudioSignal) -> simdps_core::Result<AudioSignal> {
    let rate = cfg.working_rate;
    let offset = secs_to_samples(cfg.excerpt_offset_secs, rate);
    if offset >= x.len() {
        return Err(Error::Range(format!(
            "excerpt offset {offset} is past the end of a {}-sample input",
            x.len()
        )));
    }
    let len = secs_to_samples(cfg.excerpt_secs, rate).min(x.len() - offset);
    x.slice(offset, offset + len)
}

pub fn load_corpus(cfg: &RunConfig, items: &[AudioSignal]) -> simdps_core::Result<Corpus> {
    Corpus::new(
        items
            .iter()
            .map(|s| to_rate(s, cfg.working_rate))
            .collect::<simdps_core::Result<_>>()?,
    )
}

/// Observed samples on both sides of the gap, left then right.
fn observed_context(obs: &Observation) -> Vec<f64> {
    let y = obs.samples();
    let mut v = y[..obs.mask.start()].to_vec();
    v.extend_from_slice(&y[obs.mask.end() + 1..]);
    v
}

/// Builds the configured denoiser. Demo priors are fitted to the observed
/// context of `obs`.
pub fn build_denoiser(cfg: &RunConfig, obs: &Observation) -> simdps_core::Result<Box<dyn Denoiser>> {
    match &cfg.denoiser.source {
        DenoiserSource::GaussianDemo => {
            let ctx = observed_context(obs);
            let power = if ctx.is_empty() {
                1.0
            } else {
                ctx.iter().map(|v| v * v).sum::<f64>() / ctx.len() as f64
            };
            Ok(Box::new(GaussianPrior::isotropic(obs.n(), 0.0, power.max(1e-8))?))
        }
        DenoiserSource::GmmDemo => {
            let ctx = observed_context(obs);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let prior = GmmPrior::fit_patches(
                &ctx,
                cfg.denoiser.patch,
                cfg.denoiser.components,
                cfg.denoiser.iterations,
                &mut rng,
            )?;
            Ok(Box::new(PatchDenoiser::new(prior)))
        }
        DenoiserSource::External(uri) => Ok(Box::new(ExternalDenoiser::connect(
            uri,
            Duration::from_millis(cfg.denoiser.timeout_ms),
        )?)),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub audio: AudioSignal,
    pub report: RunReport,
    pub candidate: Option<CandidateMatch>,
    pub prepared: Prepared,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs `cfg.method` on `input`. `corpus` supplies guides; `reference`,
/// when given, is cropped like the input and scored against the output.
pub fn run_inpaint(
    cfg: &RunConfig,
    input: &AudioSignal,
    corpus: &[AudioSignal],
    reference: Option<&AudioSignal>,
) -> Result<RunOutput, StageError> {
    let t0 = Instant::now();
    cfg.validate().at("config")?;
    let prepared = prepare(cfg, input).at("prepare")?;
    let obs = &prepared.obs;

    let t_search = Instant::now();
    let candidate = if cfg.needs_guide() {
        let corpus = load_corpus(cfg, corpus).at("corpus")?;
        Some(search(&corpus, obs, &cfg.search).at("search")?)
    } else {
        None
    };
    let search_time = t_search.elapsed();

    let t_method = Instant::now();
    let (samples, trace, denoiser_name, vjp) = match cfg.method {
        Method::Lpc => (ar_inpaint(obs, cfg.lpc_order).at("lpc")?.into_samples(), Vec::new(), None, None),
        Method::Sim => {
            let guide = &candidate.as_ref().expect("sim always searches").guide;
            (sim_inpaint(obs, guide).at("sim")?.into_samples(), Vec::new(), None, None)
        }
        Method::Dps | Method::SimdpsL | Method::SimdpsH => {
            let denoiser = build_denoiser(cfg, obs).at("denoiser")?;
            let has_vjp = denoiser.supports_vjp();
            let guidance = cfg.guidance_config(has_vjp);
            let guide = candidate.as_ref().map(|c| c.guide.samples());
            let state = GuidanceState::new(obs, guide, denoiser.as_ref()).at("guidance")?;
            let sampler = SamplerConfig {
                s_churn: cfg.sampler.s_churn,
                seed: cfg.seed,
            };
            let schedule = cfg.schedule.build().at("schedule")?;
            let (spliced, out) = guided_sample(&state, &guidance, &schedule, &sampler).at("sampling")?;
            (spliced, out.trace, Some(denoiser.name()), Some(has_vjp))
        }
    };
    let audio = obs.y.with_samples(samples).at("output")?;
    let method_time = t_method.elapsed();

    let metrics = match reference {
        Some(r) => {
            let r = to_rate(r, cfg.working_rate).and_then(|r| crop(cfg, &r)).at("reference")?;
            Some(gap_metrics(&audio, &r, &obs.mask).at("evaluate")?)
        }
        None => None,
    };

    let report = RunReport {
        tool: "simdps".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config: cfg.resolved(vjp),
        input: InputSummary {
            sample_rate: cfg.working_rate,
            samples: obs.n(),
            excerpt_offset: prepared.offset,
            gap_start: obs.mask.start(),
            gap_end: obs.mask.end(),
        },
        denoiser: denoiser_name,
        search: candidate.as_ref().map(SearchSummary::from),
        sigma_trace: trace,
        metrics,
        timing: Some(Timing {
            search_ms: ms(search_time),
            method_ms: ms(method_time),
            total_ms: ms(t0.elapsed()),
        }),
    };
    Ok(RunOutput {
        audio,
        report,
        candidate,
        prepared,
    })
}
