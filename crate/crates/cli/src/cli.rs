//! Command-line surface.

use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use simdps_core::baselines::gap_metrics;
use simdps_core::diffusion::Denoiser;
use simdps_core::external::{echo_handler, serve, TransportError};
use simdps_core::io::{load_wav, save_wav, WavFormat};
use simdps_core::priors::GaussianPrior;
use simdps_core::simsearch::search;
use simdps_core::{AudioSignal, Error, GapMask};

use crate::config::{DenoiserSource, Method, RunConfig};
use crate::demo::{run_demo, synth_track, DemoOptions};
use crate::error::CliError;
use crate::pipeline::{build_denoiser, load_corpus, prepare, run_inpaint, AtStage};
use crate::report::{RunReport, SearchSummary};

#[derive(Debug, Parser)]
#[command(name = "simdps", version, about = "Long-gap audio inpainting guided by retrieved similar segments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill the gap of one excerpt with the configured method.
    Inpaint(InpaintArgs),
    /// Retrieve the guide segment only.
    Search(SearchArgs),
    /// Check a denoiser: Tweedie consistency, derivatives, protocol round trips.
    DenoiseCheck(DenoiseCheckArgs),
    /// Score a reconstruction against a reference.
    Evaluate(EvaluateArgs),
    /// Synthesize a toy track and run every method on it.
    Demo(DemoArgs),
    /// Serve a reference denoiser over the wire protocol.
    ServeDenoiser(ServeArgs),
}

/// Configuration source plus per-key overrides (overrides win).
#[derive(Debug, Args, Default, Clone)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "from_report")]
    pub config: Option<PathBuf>,
    /// Reuse the configuration echoed in a previous report.
    #[arg(long)]
    pub from_report: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub omega_y: Option<f64>,
    #[arg(long)]
    pub omega_aux: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub s_churn: Option<f64>,
    /// gaussian-demo, gmm-demo, stdio:<command> or tcp:<host>:<port>.
    #[arg(long)]
    pub denoiser: Option<String>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub working_rate: Option<u32>,
    #[arg(long)]
    pub excerpt_offset: Option<f64>,
    #[arg(long)]
    pub excerpt_secs: Option<f64>,
    /// Gap start in seconds from the excerpt start; centred when omitted.
    #[arg(long)]
    pub gap_start: Option<f64>,
    #[arg(long)]
    pub gap_duration: Option<f64>,
    #[arg(long)]
    pub lpc_order: Option<usize>,
    /// pcm16 or float32.
    #[arg(long)]
    pub format: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let usage = |e: Error| CliError::Usage(e.to_string());
        let mut c = match (&self.config, &self.from_report) {
            (Some(p), _) => RunConfig::load(p).map_err(usage)?,
            (None, Some(p)) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                RunReport::from_json(&text).map_err(usage)?.config
            }
            (None, None) => RunConfig::default(),
        };
        if let Some(v) = self.method {
            c.method = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.omega_y {
            c.guidance.omega_y = v;
        }
        if let Some(v) = self.omega_aux {
            c.guidance.omega_aux = Some(v);
        }
        if let Some(v) = self.steps {
            c.schedule.steps = v;
        }
        if let Some(v) = self.s_churn {
            c.sampler.s_churn = v;
        }
        if let Some(v) = &self.denoiser {
            c.denoiser.source = v.parse().map_err(usage)?;
        }
        if let Some(v) = self.timeout_ms {
            c.denoiser.timeout_ms = v;
        }
        if let Some(v) = self.working_rate {
            c.working_rate = v;
        }
        if let Some(v) = self.excerpt_offset {
            c.excerpt_offset_secs = v;
        }
        if let Some(v) = self.excerpt_secs {
            c.excerpt_secs = v;
        }
        if let Some(v) = self.gap_start {
            c.gap.start_secs = Some(v);
        }
        if let Some(v) = self.gap_duration {
            c.gap.duration_secs = v;
        }
        if let Some(v) = self.lpc_order {
            c.lpc_order = v;
        }
        if let Some(v) = &self.format {
            c.output_format = v.parse::<WavFormat>().map_err(usage)?;
        }
        c.validate().map_err(usage)?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct InpaintArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Input WAV; the configured gap is masked out of it.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Corpus WAV files (repeatable); required by sim and simdps methods.
    #[arg(long)]
    pub corpus: Vec<PathBuf>,
    /// Ground truth for metrics.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Report path; defaults to the output path with a .json extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write the retrieved guide.
    #[arg(long)]
    pub guide_out: Option<PathBuf>,
    /// Leave wall-clock timings out of the report.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    /// Where to write the guide (working rate, excerpt length).
    #[arg(long)]
    pub guide_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DenoiseCheckArgs {
    #[arg(long, default_value = "gmm-demo")]
    pub denoiser: String,
    #[arg(long, default_value_t = 1024)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub reconstruction: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Take the gap from a run report.
    #[arg(long, conflicts_with_all = ["gap_start", "gap_duration"])]
    pub report: Option<PathBuf>,
    /// Gap start in seconds; centred when omitted.
    #[arg(long)]
    pub gap_start: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub gap_duration: f64,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value = "simdps-demo")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub working_rate: Option<u32>,
    #[arg(long, default_value_t = 30.0)]
    pub track_secs: f64,
    #[arg(long)]
    pub denoiser: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ServerKind {
    /// Returns the input unchanged.
    Echo,
    /// MMSE denoiser of an isotropic Gaussian prior.
    Gaussian,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kind: ServerKind,
    #[arg(long, default_value_t = 0.0)]
    pub mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pub var: f64,
    /// Accept only requests of this many samples.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Listen on this TCP address instead of stdin/stdout; the bound
    /// address is printed as `tcp:<addr>`.
    #[arg(long)]
    pub listen: Option<String>,
}

fn read_wav(path: &Path) -> Result<AudioSignal, CliError> {
    Ok(load_wav(path).at("load")?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| {
        CliError::at(
            "write",
            Error::Io {
                path: path.to_path_buf(),
                source,
            },
        )
    })
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Inpaint(a) => inpaint(a),
        Command::Search(a) => search_cmd(a),
        Command::DenoiseCheck(a) => denoise_check(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Demo(a) => demo(a),
        Command::ServeDenoiser(a) => serve_denoiser(a),
    }
}

fn inpaint(a: InpaintArgs) -> Result<(), CliError> {
    let cfg = a.cfg.resolve()?;
    if cfg.needs_guide() && a.corpus.is_empty() {
        return Err(CliError::Usage(format!("method {} needs at least one --corpus file", cfg.method)));
    }
    let input = read_wav(&a.input)?;
    let corpus = a.corpus.iter().map(|p| read_wav(p)).collect::<Result<Vec<_>, _>>()?;
    let reference = a.reference.as_deref().map(read_wav).transpose()?;
    let out = run_inpaint(&cfg, &input, &corpus, reference.as_ref())?;
    save_wav(&out.audio, &a.output, cfg.output_format).at("write")?;
    if let (Some(path), Some(c)) = (&a.guide_out, &out.candidate) {
        save_wav(&c.guide, path, cfg.output_format).at("write")?;
    }
    let report = if a.no_timing { out.report.without_timing() } else { out.report };
    let report_path = a.report.unwrap_or_else(|| a.output.with_extension("json"));
    write_text(&report_path, &report.to_json())
}

fn search_cmd(a: SearchArgs) -> Result<(), CliError> {
    let cfg = a.cfg.resolve()?;
    let input = read_wav(&a.input)?;
    let corpus = a.corpus.iter().map(|p| read_wav(p)).collect::<Result<Vec<_>, _>>()?;
    let prepared = prepare(&cfg, &input).at("prepare")?;
    let corpus = load_corpus(&cfg, &corpus).at("corpus")?;
    let m = search(&corpus, &prepared.obs, &cfg.search).at("search")?;
    save_wav(&m.guide, &a.guide_out, cfg.output_format).at("write")?;
    print_json(&SearchSummary::from(&m));
    Ok(())
}

#[derive(Debug, Serialize)]
struct CheckReport {
    denoiser: String,
    dim: usize,
    points: usize,
    tweedie_max_rel_error: f64,
    supports_vjp: bool,
    vjp_max_rel_error: Option<f64>,
    mean_request_ms: f64,
    passed: bool,
}

const TWEEDIE_TOL: f64 = 1e-9;
const VJP_TOL: f64 = 1e-4;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
    num / den
}

fn denoise_check(a: DenoiseCheckArgs) -> Result<(), CliError> {
    let source: DenoiserSource = a.denoiser.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    if a.dim == 0 {
        return Err(CliError::Usage("--dim must be positive".into()));
    }
    let rate = 16_000;
    let cfg = RunConfig {
        seed: a.seed,
        working_rate: rate,
        excerpt_secs: 6.0,
        denoiser: crate::config::DenoiserSettings {
            source,
            timeout_ms: a.timeout_ms,
            ..Default::default()
        },
        ..Default::default()
    };
    let track = synth_track(rate, 6.0, a.seed).at("synthesize")?;
    let prepared = prepare(&cfg, &track).at("prepare")?;
    let denoiser = build_denoiser(&cfg, &prepared.obs).at("denoiser")?;

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let offset = rng.random_range(0..track.len() - a.dim.min(track.len()) + 1);
    let clean: Vec<f64> = track.samples().iter().cycle().skip(offset).take(a.dim).copied().collect();
    let mut tweedie: f64 = 0.0;
    let mut vjp_err: Option<f64> = None;
    let mut requests = 0usize;
    let t0 = Instant::now();
    for _ in 0..a.points {
        let sigma = (rng.random_range(-5.0..8f64.ln())).exp();
        let x: Vec<f64> = clean
            .iter()
            .map(|c| c + sigma * (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt())
            .collect();
        let d = denoiser.denoise(&x, sigma).at("denoise")?;
        let s = denoiser.score(&x, sigma).at("denoise")?;
        requests += 2;
        let via_score: Vec<f64> = x.iter().zip(&s).map(|(x, s)| x + sigma * sigma * s).collect();
        tweedie = tweedie.max(rel_err(&via_score, &d));
        if denoiser.supports_vjp() {
            let u: Vec<f64> = (0..a.dim).map(|_| rng.random::<f64>() - 0.5).collect();
            let v: Vec<f64> = (0..a.dim).map(|_| rng.random::<f64>() - 0.5).collect();
            let h = 1e-5 * sigma.max(1e-2);
            let plus: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x + h * v).collect();
            let minus: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x - h * v).collect();
            let dp = denoiser.denoise(&plus, sigma).at("denoise")?;
            let dm = denoiser.denoise(&minus, sigma).at("denoise")?;
            let fd: f64 = dp.iter().zip(&dm).zip(&u).map(|((p, m), u)| u * (p - m) / (2.0 * h)).sum();
            let jtu = denoiser.vjp(&x, sigma, &u).at("denoise")?;
            let exact: f64 = jtu.iter().zip(&v).map(|(a, b)| a * b).sum();
            let e = (exact - fd).abs() / fd.abs().max(1e-12);
            vjp_err = Some(vjp_err.unwrap_or(0.0).max(e));
        }
    }
    let elapsed = t0.elapsed().as_secs_f64() * 1e3;
    let passed = tweedie < TWEEDIE_TOL && vjp_err.is_none_or(|e| e < VJP_TOL);
    print_json(&CheckReport {
        denoiser: denoiser.name(),
        dim: a.dim,
        points: a.points,
        tweedie_max_rel_error: tweedie,
        supports_vjp: denoiser.supports_vjp(),
        vjp_max_rel_error: vjp_err,
        mean_request_ms: if requests > 0 { elapsed / requests as f64 } else { 0.0 },
        passed,
    });
    if passed {
        Ok(())
    } else {
        Err(CliError::at(
            "denoise-check",
            Error::Parameter("denoiser failed a consistency check".into()),
        ))
    }
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let rec = read_wav(&a.reconstruction)?;
    let reference = read_wav(&a.reference)?;
    if rec.len() != reference.len() || rec.sample_rate() != reference.sample_rate() {
        return Err(CliError::at(
            "evaluate",
            Error::Shape {
                expected: reference.len(),
                actual: rec.len(),
            },
        ));
    }
    let mask = match &a.report {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            let r = RunReport::from_json(&text).map_err(|e| CliError::Usage(e.to_string()))?;
            GapMask::from_interval(rec.len(), r.input.gap_start, r.input.gap_end).at("evaluate")?
        }
        None => {
            let rate = rec.sample_rate() as f64;
            let len = ((a.gap_duration * rate).round() as usize).max(1);
            match a.gap_start {
                None => GapMask::centred(rec.len(), len),
                Some(s) => {
                    let start = (s * rate).round() as usize;
                    GapMask::from_interval(rec.len(), start, start + len - 1)
                }
            }
            .at("evaluate")?
        }
    };
    print_json(&gap_metrics(&rec, &reference, &mask).at("evaluate")?);
    Ok(())
}

fn demo(a: DemoArgs) -> Result<(), CliError> {
    let mut base = match &a.config {
        Some(p) => RunConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    base.seed = a.seed;
    if let Some(r) = a.working_rate {
        base.working_rate = r;
    }
    if let Some(d) = &a.denoiser {
        base.denoiser.source = d.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    }
    base.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = DemoOptions {
        track_secs: a.track_secs,
        timing: !a.no_timing,
        ..Default::default()
    };
    let reports = run_demo(&a.out_dir, &base, &opts)?;
    for r in &reports {
        let m = r.metrics.as_ref();
        eprintln!(
            "{:<9} gap RMSE {:.4}  LSD {:>7}  boundary {:.4}",
            r.config.method.name(),
            m.map_or(f64::NAN, |m| m.gap_rmse),
            m.and_then(|m| m.gap_lsd_db).map_or("-".into(), |v| format!("{v:.2}")),
            m.map_or(f64::NAN, |m| m.boundary_jump),
        );
    }
    eprintln!("wrote {}", a.out_dir.display());
    Ok(())
}

fn external_io(e: io::Error) -> CliError {
    CliError::at("serve", Error::Transport(TransportError::Io(e)))
}

fn handler_for(args: &ServeArgs) -> impl FnMut(f64, &[f64]) -> Result<Vec<f64>, u8> + Send + 'static {
    let (kind, mean, var) = (args.kind, args.mean, args.var);
    move |sigma, x| match kind {
        ServerKind::Echo => echo_handler(sigma, x),
        ServerKind::Gaussian => GaussianPrior::isotropic(x.len(), mean, var)
            .and_then(|p| p.denoise(x, sigma))
            .map_err(|_| simdps_core::external::STATUS_FAILED),
    }
}

fn serve_denoiser(a: ServeArgs) -> Result<(), CliError> {
    if matches!(a.kind, ServerKind::Gaussian) && !(a.var > 0.0) {
        return Err(CliError::Usage("--var must be positive".into()));
    }
    match &a.listen {
        None => {
            let stdin = io::stdin();
            let stdout = io::stdout();
            let mut reader = BufReader::new(stdin.lock());
            let mut writer = BufWriter::new(stdout.lock());
            serve(&mut reader, &mut writer, a.dim, handler_for(&a))
                .map_err(|e| CliError::at("serve", Error::Transport(e)))
        }
        Some(addr) => {
            let listener = TcpListener::bind(addr).map_err(external_io)?;
            let local = listener.local_addr().map_err(external_io)?;
            println!("tcp:{local}");
            io::stdout().flush().map_err(external_io)?;
            for stream in listener.incoming() {
                let stream = stream.map_err(external_io)?;
                let mut handler = handler_for(&a);
                let dim = a.dim;
                std::thread::spawn(move || {
                    let _ = stream.set_nodelay(true);
                    let Ok(read_half) = stream.try_clone() else { return };
                    let mut reader = BufReader::new(read_half);
                    let mut writer = BufWriter::new(stream);
                    if let Err(e) = serve(&mut reader, &mut writer, dim, &mut handler) {
                        eprintln!("connection closed: {e}");
                    }
                });
            }
            Ok(())
        }
    }
}
