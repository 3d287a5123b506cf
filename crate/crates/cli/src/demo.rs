//! Synthetic repetitive track and the all-methods demo run.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use simdps_core::baselines::GapMetrics;
use simdps_core::io::{save_wav, WavFormat};
use simdps_core::simsearch::build_corpus;
use simdps_core::{AudioSignal, Error};

use crate::config::{Method, RunConfig};
use crate::error::CliError;
use crate::pipeline::{run_inpaint, AtStage};
use crate::report::{RunReport, SearchSummary};

const BEAT_SECS: f64 = 0.5;
const MELODY: [i32; 8] = [69, 72, 76, 74, 72, 71, 69, 64];
const BASS: [i32; 4] = [45, 41, 43, 40];

fn midi_hz(note: i32) -> f64 {
    440.0 * 2f64.powf((note - 69) as f64 / 12.0)
}

fn add_note(out: &mut [f64], rate: u32, onset: f64, dur: f64, hz: f64, amp: f64) {
    let start = (onset * rate as f64).round() as usize;
    let len = ((dur + 0.4) * rate as f64) as usize;
    for i in 0..len.min(out.len().saturating_sub(start)) {
        let t = i as f64 / rate as f64;
        let attack = (t / 0.005).min(1.0);
        let env = attack * (-t / 0.35).exp();
        let tone: f64 = [(1.0, 1.0), (2.0, 0.45), (3.0, 0.2)]
            .iter()
            .filter(|(h, _)| h * hz < rate as f64 / 2.0)
            .map(|(h, a)| a * (2.0 * PI * h * hz * t).sin())
            .sum();
        out[start + i] += amp * env * tone;
    }
}

/// A looping two-bar melody over a bass line, with per-note velocity drawn
/// from `seed` and a faint noise floor.
pub fn synth_track(rate: u32, secs: f64, seed: u64) -> simdps_core::Result<AudioSignal> {
    let n = (secs * rate as f64).round() as usize;
    let mut out = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beats = (secs / BEAT_SECS).ceil() as usize;
    for b in 0..beats {
        let onset = b as f64 * BEAT_SECS;
        let v: f64 = rng.random_range(0.85..1.0);
        add_note(&mut out, rate, onset, BEAT_SECS, midi_hz(MELODY[b % MELODY.len()]), 0.18 * v);
        if b % 2 == 0 {
            let v: f64 = rng.random_range(0.85..1.0);
            add_note(&mut out, rate, onset, 2.0 * BEAT_SECS, midi_hz(BASS[(b / 2) % BASS.len()]), 0.2 * v);
        }
    }
    for s in out.iter_mut() {
        let e: f64 = rng.random_range(-1.0..1.0);
        *s += 1e-3 * e;
    }
    AudioSignal::new(out, rate)
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoEntry {
    pub method: Method,
    pub omega_y: f64,
    pub omega_aux: f64,
    pub search: Option<SearchSummary>,
    pub metrics: Option<GapMetrics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoSummary {
    pub track_secs: f64,
    pub excerpt_start_secs: f64,
    pub working_rate: u32,
    pub seed: u64,
    pub runs: Vec<DemoEntry>,
}

pub struct DemoOptions {
    pub track_secs: f64,
    pub excerpt_start_secs: f64,
    pub timing: bool,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            track_secs: 30.0,
            excerpt_start_secs: 12.25,
            timing: true,
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| {
        CliError::Data(
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
            .into(),
        )
    })
}

/// Synthesizes a track, cuts an excerpt, uses the rest of the track as the
/// corpus and runs every method. Writes `reference.wav`, `observed.wav`,
/// `<method>.wav`, `<method>.json` and `summary.json` into `out_dir`.
pub fn run_demo(out_dir: &Path, base: &RunConfig, opts: &DemoOptions) -> Result<Vec<RunReport>, CliError> {
    fs::create_dir_all(out_dir).map_err(|source| {
        CliError::Data(
            Error::Io {
                path: out_dir.to_path_buf(),
                source,
            }
            .into(),
        )
    })?;
    let rate = base.working_rate;
    let track = synth_track(rate, opts.track_secs, base.seed).at("synthesize")?;
    let start = (opts.excerpt_start_secs * rate as f64).round() as usize;
    let len = (base.excerpt_secs * rate as f64).round() as usize;
    if start + len > track.len() {
        return Err(CliError::Usage(format!(
            "excerpt of {} s at {} s does not fit a {} s track",
            base.excerpt_secs, opts.excerpt_start_secs, opts.track_secs
        )));
    }
    let excerpt = track.slice(start, start + len).at("synthesize")?;
    let corpus = build_corpus(&track, start..start + len).at("corpus")?;

    let mut cfg = base.clone();
    cfg.excerpt_offset_secs = 0.0;
    let mut reports = Vec::new();
    let mut runs = Vec::new();
    for method in Method::ALL {
        cfg.method = method;
        cfg.guidance.omega_aux = None;
        let out = run_inpaint(&cfg, &excerpt, corpus.items(), Some(&excerpt))?;
        if method == Method::ALL[0] {
            save_wav(&out.prepared.excerpt, out_dir.join("reference.wav"), WavFormat::Float32).at("write")?;
            save_wav(&out.prepared.obs.y, out_dir.join("observed.wav"), WavFormat::Float32).at("write")?;
        }
        save_wav(&out.audio, out_dir.join(format!("{method}.wav")), WavFormat::Float32).at("write")?;
        let report = if opts.timing { out.report } else { out.report.without_timing() };
        write(&out_dir.join(format!("{method}.json")), &report.to_json())?;
        runs.push(DemoEntry {
            method,
            omega_y: report.config.guidance.omega_y,
            omega_aux: report.config.omega_aux(),
            search: report.search.clone(),
            metrics: report.metrics.clone(),
        });
        reports.push(report);
    }
    let summary = DemoSummary {
        track_secs: opts.track_secs,
        excerpt_start_secs: opts.excerpt_start_secs,
        working_rate: rate,
        seed: base.seed,
        runs,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write(&out_dir.join("summary.json"), &text)?;
    Ok(reports)
}
