//! Reference reconstructions and objective gap metrics.
//!
//! `ar_inpaint` is the low anchor: autoregressive extrapolation from both
//! sides of the gap. `sim_inpaint` drops a retrieved guide into the
//! gap with short fades into the surrounding audio.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dsp::{fade_gain, fade_len, stft_magnitude, StftConfig};
use crate::error::{Error, Result};
use crate::signal::{AudioSignal, GapMask, Observation};

pub const AR_ORDER_AUDIO: usize = 256;
pub const AR_ORDER_SYNTHETIC: usize = 32;
pub const SIM_FADE_MS: f64 = 10.0;

const STABILITY_TOL: f64 = 1e-8;
const MARGINAL_TOL: f64 = 1e-12;

/// Linear predictor `x[n] ≈ Σ_k a[k] x[n-1-k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub coefficients: Vec<f64>,
}

impl ArModel {
    pub fn zero(order: usize) -> Self {
        Self {
            coefficients: vec![0.0; order],
        }
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// One-step prediction from `history`, whose last element is the most recent.
    pub fn predict(&self, history: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(history.iter().rev())
            .map(|(a, x)| a * x)
            .sum()
    }

    /// Whether the error filter has no zeros outside the unit circle, by the
    /// step-down recursion. Zeros on the circle (undamped partials) count as
    /// stable.
    pub fn is_stable(&self) -> bool {
        let mut c: Vec<f64> = std::iter::once(1.0).chain(self.coefficients.iter().map(|a| -a)).collect();
        for m in (1..c.len()).rev() {
            let k = c[m];
            if k.abs() > 1.0 + STABILITY_TOL {
                return false;
            }
            let denom = 1.0 - k * k;
            if denom.abs() < MARGINAL_TOL {
                return true;
            }
            c = (0..m).map(|i| (c[i] - k * c[m - i]) / denom).collect();
        }
        true
    }

    /// Continues `history` by `len` samples.
    pub fn extrapolate(&self, history: &[f64], len: usize) -> Vec<f64> {
        let p = self.order();
        let keep = history.len().min(p);
        let mut buf: Vec<f64> = history[history.len() - keep..].to_vec();
        buf.reserve(len);
        for _ in 0..len {
            let start = buf.len().saturating_sub(p);
            let next = self.predict(&buf[start..]);
            buf.push(next);
        }
        buf.split_off(keep)
    }
}

/// Predictor estimation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArMethod {
    /// Lattice recursion choosing each reflection coefficient to minimize the
    /// summed forward and backward error of that stage.
    Burg,
    /// Joint least-squares minimization of the summed forward and backward
    /// errors over all coefficients. Exact on noiseless AR data.
    #[default]
    ForwardBackward,
}

/// Burg estimate of an order-`order` predictor.
pub fn ar_fit(context: &[f64], order: usize) -> Result<ArModel> {
    ar_fit_with(context, order, ArMethod::Burg)
}

pub fn ar_fit_with(context: &[f64], order: usize, method: ArMethod) -> Result<ArModel> {
    if order == 0 {
        return Err(Error::Parameter("AR order must be at least 1".into()));
    }
    if context.len() < 3 * order {
        return Err(Error::TooShort {
            len: context.len(),
            window: 3 * order,
        });
    }
    if context.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSignal("AR context contains non-finite samples".into()));
    }
    Ok(match method {
        ArMethod::Burg => burg(context, order),
        ArMethod::ForwardBackward => forward_backward(context, order),
    })
}

fn burg(context: &[f64], order: usize) -> ArModel {
    let n = context.len();
    let mut ef = context.to_vec();
    let mut eb = context.to_vec();
    // Error-filter polynomial 1 + c[1] z^-1 + ... + c[m] z^-m.
    let mut c = vec![0.0; order + 1];
    c[0] = 1.0;
    for m in 1..=order {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in m..n {
            num += ef[i] * eb[i - 1];
            den += ef[i] * ef[i] + eb[i - 1] * eb[i - 1];
        }
        if den <= f64::MIN_POSITIVE {
            break;
        }
        let k = -2.0 * num / den;
        let prev = c.clone();
        for i in 1..=m {
            c[i] = prev[i] + k * prev[m - i];
        }
        for i in (m..n).rev() {
            let f = ef[i];
            ef[i] = f + k * eb[i - 1];
            eb[i] = eb[i - 1] + k * f;
        }
    }
    ArModel {
        coefficients: c[1..].iter().map(|v| -v).collect(),
    }
}

/// Singular values below this fraction of the largest are discarded, giving
/// the minimum-norm predictor when the context has fewer than `order` modes.
const FB_RCOND: f64 = 1e-12;

fn forward_backward(x: &[f64], p: usize) -> ArModel {
    let n = x.len();
    // c[i][j] = sum_{t=p}^{n-1} x[t-i] x[t-j]
    let mut c = DMatrix::<f64>::zeros(p + 1, p + 1);
    for j in 0..=p {
        let v: f64 = (p..n).map(|t| x[t] * x[t - j]).sum();
        c[(0, j)] = v;
        c[(j, 0)] = v;
    }
    for i in 0..p {
        for j in i..p {
            let v = c[(i, j)] + x[p - 1 - i] * x[p - 1 - j] - x[n - 1 - i] * x[n - 1 - j];
            c[(i + 1, j + 1)] = v;
            c[(j + 1, i + 1)] = v;
        }
    }
    let r = DMatrix::from_fn(p, p, |j, k| c[(j + 1, k + 1)] + c[(p - j - 1, p - k - 1)]);
    let rhs = DVector::from_fn(p, |j, _| c[(0, j + 1)] + c[(p, p - j - 1)]);
    if r.iter().all(|&v| v == 0.0) {
        return ArModel::zero(p);
    }
    let svd = r.svd(true, true);
    let tol = FB_RCOND * svd.singular_values.max();
    match svd.solve(&rhs, tol) {
        Ok(a) if a.iter().all(|v| v.is_finite()) => ArModel {
            coefficients: a.iter().copied().collect(),
        },
        _ => ArModel::zero(p),
    }
}

fn side_model(context: &[f64], order: usize, method: ArMethod) -> Result<Option<ArModel>> {
    let p = order.min(context.len() / 3);
    if p == 0 || context.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    let model = ar_fit_with(context, p, method)?;
    if method == ArMethod::ForwardBackward && !model.is_stable() {
        return ar_fit_with(context, p, ArMethod::Burg).map(Some);
    }
    Ok(Some(model))
}

/// Fills the gap by forward extrapolation from the left context and backward
/// extrapolation from the right, blended by a raised cosine across the gap.
/// Sides shorter than three times `order` use a proportionally lower order.
/// A least-squares predictor that is not minimum-phase is replaced by the
/// Burg predictor, which always is.
pub fn ar_inpaint(obs: &Observation, order: usize) -> Result<AudioSignal> {
    ar_inpaint_with(obs, order, ArMethod::default())
}

pub fn ar_inpaint_with(obs: &Observation, order: usize, method: ArMethod) -> Result<AudioSignal> {
    if order == 0 {
        return Err(Error::Parameter("AR order must be at least 1".into()));
    }
    let y = obs.samples();
    let (ts, te) = (obs.mask.start(), obs.mask.end());
    let len = obs.mask.gap_samples();
    let left = &y[..ts];
    let right: Vec<f64> = y[te + 1..].iter().rev().copied().collect();

    let forward = side_model(left, order, method)?.map(|m| m.extrapolate(left, len));
    let backward = side_model(&right, order, method)?.map(|m| {
        let mut b = m.extrapolate(&right, len);
        b.reverse();
        b
    });

    let fill: Vec<f64> = match (forward, backward) {
        (Some(f), Some(b)) => (0..len)
            .map(|i| {
                let w = fade_gain(i, len);
                f[i] + w * (b[i] - f[i])
            })
            .collect(),
        (Some(f), None) => f,
        (None, Some(b)) => b,
        (None, None) => vec![0.0; len],
    };
    let mut out = y.to_vec();
    out[ts..=te].copy_from_slice(&fill);
    obs.y.with_samples(out)
}

/// Inserts the gap region of `guide` with `SIM_FADE_MS` fades placed on the
/// observed side of each boundary. Fades shrink to half the gap or to the
/// available context when either is shorter.
pub fn sim_inpaint(obs: &Observation, guide: &AudioSignal) -> Result<AudioSignal> {
    sim_inpaint_with_fade(obs, guide, SIM_FADE_MS)
}

pub fn sim_inpaint_with_fade(obs: &Observation, guide: &AudioSignal, fade_ms: f64) -> Result<AudioSignal> {
    obs.mask.check_len(guide.len())?;
    if !(fade_ms >= 0.0 && fade_ms.is_finite()) {
        return Err(Error::Parameter(format!("fade length must be >= 0 ms, got {fade_ms}")));
    }
    let y = obs.samples();
    let g = guide.samples();
    let (ts, te, n) = (obs.mask.start(), obs.mask.end(), obs.n());
    let nominal = fade_len(fade_ms, obs.sample_rate()).min(obs.mask.gap_samples() / 2);
    let mut out = y.to_vec();
    out[ts..=te].copy_from_slice(&g[ts..=te]);

    let w_left = nominal.min(ts);
    for k in 0..w_left {
        let i = ts - w_left + k;
        out[i] = y[i] + fade_gain(k, w_left) * (g[i] - y[i]);
    }
    let w_right = nominal.min(n - 1 - te);
    for k in 0..w_right {
        let i = te + 1 + k;
        out[i] = g[i] + fade_gain(k, w_right) * (y[i] - g[i]);
    }
    obs.y.with_samples(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapMetrics {
    /// Root-mean-square error over the gap.
    pub gap_rmse: f64,
    /// Mean log-spectral distance in dB over STFT frames lying wholly in the
    /// gap; absent when the gap is shorter than one window.
    pub gap_lsd_db: Option<f64>,
    /// Largest deviation of the first differences across the two gap
    /// boundaries from those of the reference.
    pub boundary_jump: f64,
}

const LSD_FLOOR: f64 = 1e-10;

pub fn gap_metrics(reconstruction: &AudioSignal, reference: &AudioSignal, mask: &GapMask) -> Result<GapMetrics> {
    gap_metrics_with(reconstruction, reference, mask, &StftConfig::default())
}

pub fn gap_metrics_with(
    reconstruction: &AudioSignal,
    reference: &AudioSignal,
    mask: &GapMask,
    stft: &StftConfig,
) -> Result<GapMetrics> {
    mask.check_len(reconstruction.len())?;
    mask.check_len(reference.len())?;
    let r = reconstruction.samples();
    let x = reference.samples();
    let (ts, te) = (mask.start(), mask.end());

    let sq: f64 = r[ts..=te].iter().zip(&x[ts..=te]).map(|(a, b)| (a - b).powi(2)).sum();
    let gap_rmse = (sq / mask.gap_samples() as f64).sqrt();

    let gap_lsd_db = if mask.gap_samples() >= stft.window_len {
        let sr = reconstruction.slice(ts, te + 1)?;
        let sx = reference.slice(ts, te + 1)?;
        let a = stft_magnitude(&sr, stft)?;
        let b = stft_magnitude(&sx, stft)?;
        let mut total = 0.0;
        for t in 0..a.frames() {
            let mean: f64 = a
                .frame(t)
                .iter()
                .zip(b.frame(t))
                .map(|(p, q)| {
                    let d = 10.0 * ((p * p + LSD_FLOOR).log10() - (q * q + LSD_FLOOR).log10());
                    d * d
                })
                .sum::<f64>()
                / a.bins() as f64;
            total += mean.sqrt();
        }
        Some(total / a.frames() as f64)
    } else {
        None
    };

    let mut boundary_jump: f64 = 0.0;
    if ts > 0 {
        boundary_jump = boundary_jump.max(((r[ts] - r[ts - 1]) - (x[ts] - x[ts - 1])).abs());
    }
    if te + 1 < r.len() {
        boundary_jump = boundary_jump.max(((r[te + 1] - r[te]) - (x[te + 1] - x[te])).abs());
    }
    Ok(GapMetrics {
        gap_rmse,
        gap_lsd_db,
        boundary_jump,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn sine(n: usize, omega: f64, phase: f64) -> Vec<f64> {
        (0..n).map(|i| (omega * i as f64 + phase).sin()).collect()
    }

    fn observe(x: &[f64], rate: u32, start: usize, end: usize) -> Observation {
        let mask = GapMask::from_interval(x.len(), start, end).unwrap();
        let y = AudioSignal::new(mask.mask(x).unwrap(), rate).unwrap();
        Observation::new(y, mask, 0.0).unwrap()
    }

    #[test]
    fn burg_recovers_sinusoid_recursion() {
        // The 2000 lag-one pairs span whole periods.
        let omega = 2.0 * PI * 5.0 / 200.0;
        let x = sine(2001, omega, 0.3);
        let m = ar_fit(&x, 2).unwrap();
        assert!((m.coefficients[0] - 2.0 * omega.cos()).abs() < 1e-6, "{:?}", m);
        assert!((m.coefficients[1] + 1.0).abs() < 1e-6, "{:?}", m);
    }

    #[test]
    fn burg_generic_sinusoid_is_close() {
        let omega = 0.1234;
        let x = sine(4000, omega, 1.0);
        let m = ar_fit(&x, 2).unwrap();
        assert!((m.coefficients[0] - 2.0 * omega.cos()).abs() < 1e-3);
        assert!((m.coefficients[1] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn least_squares_sinusoid_any_frequency() {
        let omega = 0.1234;
        let m = ar_fit_with(&sine(500, omega, 1.0), 2, ArMethod::ForwardBackward).unwrap();
        assert!((m.coefficients[0] - 2.0 * omega.cos()).abs() < 1e-9, "{m:?}");
        assert!((m.coefficients[1] + 1.0).abs() < 1e-9, "{m:?}");
    }

    #[test]
    fn burg_and_least_squares_agree_on_order_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = vec![0.0f64; 5000];
        for i in 1..x.len() {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[i] = 0.8 * x[i - 1] + e;
        }
        let b = ar_fit(&x, 1).unwrap().coefficients[0];
        let l = ar_fit_with(&x, 1, ArMethod::ForwardBackward).unwrap().coefficients[0];
        assert!((b - 0.8).abs() < 0.03 && (l - 0.8).abs() < 0.03, "{b} {l}");
        assert!((b - l).abs() < 1e-3);
    }

    #[test]
    fn stability_check() {
        assert!(ArModel { coefficients: vec![0.5] }.is_stable());
        assert!(!ArModel { coefficients: vec![1.5] }.is_stable());
        // Undamped sinusoid: zeros on the unit circle.
        assert!(ArModel { coefficients: vec![2.0 * 0.3f64.cos(), -1.0] }.is_stable());
        // Complex pair of radius 1.1.
        let r: f64 = 1.1;
        assert!(!ArModel { coefficients: vec![2.0 * r * 0.3f64.cos(), -r * r] }.is_stable());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..3000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(ar_fit(&x, 16).unwrap().is_stable());
    }

    #[test]
    fn burg_white_noise_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = ar_fit(&x, 2).unwrap();
        assert!(m.coefficients.iter().all(|a| a.abs() < 0.1), "{:?}", m);
    }

    #[test]
    fn burg_zero_signal_gives_zero_model() {
        assert_eq!(ar_fit(&[0.0; 30], 4).unwrap(), ArModel::zero(4));
    }

    #[test]
    fn burg_rejects_short_context() {
        assert!(matches!(ar_fit(&[1.0; 5], 2), Err(Error::TooShort { .. })));
    }

    #[test]
    fn ar_inpaint_sinusoid_gap() {
        let rate = 8000;
        let x = sine(rate as usize, 2.0 * PI * 440.0 / rate as f64, 0.2);
        let obs = observe(&x, rate, 3600, 3600 + 800 - 1);
        let out = ar_inpaint(&obs, AR_ORDER_SYNTHETIC).unwrap();
        let m = gap_metrics(&out, &AudioSignal::new(x.clone(), rate).unwrap(), &obs.mask).unwrap();
        assert!(m.gap_rmse < 1e-3, "{m:?}");
        assert_eq!(&out.samples()[..3600], &x[..3600]);
        assert_eq!(&out.samples()[4400..], &x[4400..]);
    }

    #[test]
    fn ar_inpaint_known_recursion() {
        // Two sustained partials form an order-4 recursion.
        let n = 1250;
        let x: Vec<f64> = (0..n)
            .map(|i| (0.05 * PI * i as f64).sin() + 0.5 * (0.2 * PI * i as f64 + 0.4).cos())
            .collect();
        let obs = observe(&x, 8000, 600, 649);
        let burg = ar_inpaint_with(&obs, 4, ArMethod::Burg).unwrap();
        let out = ar_inpaint(&obs, 4).unwrap();
        let reference = AudioSignal::new(x.clone(), 8000).unwrap();
        let mb = gap_metrics(&burg, &reference, &obs.mask).unwrap();
        assert!(mb.gap_rmse < 1e-2, "{mb:?}");
        let m = gap_metrics(&out, &AudioSignal::new(x, 8000).unwrap(), &obs.mask).unwrap();
        assert!(m.gap_rmse < 1e-6, "{m:?}");
    }

    #[test]
    fn ar_inpaint_zero_context() {
        let obs = observe(&[0.0; 200], 8000, 50, 99);
        let out = ar_inpaint(&obs, 8).unwrap();
        assert!(out.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ar_inpaint_one_sided() {
        let x = sine(400, PI / 10.0, 0.7);
        let obs = observe(&x, 8000, 301, 399);
        let out = ar_inpaint(&obs, 2).unwrap();
        let err = out.samples()[301..].iter().zip(&x[301..]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn sim_with_true_guide_is_exact() {
        let rate = 8000;
        let x = sine(4000, 0.05, 0.0);
        let obs = observe(&x, rate, 1000, 2999);
        let truth = AudioSignal::new(x.clone(), rate).unwrap();
        let out = sim_inpaint(&obs, &truth).unwrap();
        let m = gap_metrics(&out, &truth, &obs.mask).unwrap();
        assert_eq!(out.samples(), &x[..]);
        assert_eq!(m, GapMetrics { gap_rmse: 0.0, gap_lsd_db: Some(0.0), boundary_jump: 0.0 });
    }

    #[test]
    fn sim_ramps_between_constants() {
        let rate = 1000;
        let obs = observe(&[0.0; 200], rate, 80, 119);
        let guide = AudioSignal::new(vec![1.0; 200], rate).unwrap();
        let out = sim_inpaint(&obs, &guide).unwrap();
        let s = out.samples();
        // 10 ms at 1 kHz is 10 samples on each side.
        assert!(s[..70].iter().all(|&v| v == 0.0));
        assert!(s[130..].iter().all(|&v| v == 0.0));
        assert!(s[80..120].iter().all(|&v| v == 1.0));
        for k in 0..10 {
            assert!((s[70 + k] - fade_gain(k, 10)).abs() < 1e-15);
            assert!((s[120 + k] - (1.0 - fade_gain(k, 10))).abs() < 1e-15);
        }
        assert!(s[70..80].windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn sim_fade_shrinks_for_short_gap() {
        let rate = 1000;
        let obs = observe(&[0.0; 100], rate, 50, 55);
        let guide = AudioSignal::new(vec![1.0; 100], rate).unwrap();
        let s = sim_inpaint(&obs, &guide).unwrap().into_samples();
        assert!(s[..47].iter().all(|&v| v == 0.0));
        assert!(s[47..50].iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(s[59..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn metrics_constant_offset() {
        let rate = 8000;
        let x = sine(600, 0.1, 0.0);
        let mask = GapMask::from_interval(600, 200, 399).unwrap();
        let mut r = x.clone();
        for v in &mut r[200..400] {
            *v += 0.1;
        }
        let m = gap_metrics(
            &AudioSignal::new(r, rate).unwrap(),
            &AudioSignal::new(x, rate).unwrap(),
            &mask,
        )
        .unwrap();
        assert!((m.gap_rmse - 0.1).abs() < 1e-12);
        assert!(m.gap_lsd_db.is_none());
        assert!((m.boundary_jump - 0.1).abs() < 1e-12);
    }

    #[test]
    fn metrics_noise_has_boundary_jump() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = sine(2048, 0.02, 0.0);
        let r: Vec<f64> = (0..2048).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mask = GapMask::centred(2048, 1200).unwrap();
        let m = gap_metrics(
            &AudioSignal::new(r, 8000).unwrap(),
            &AudioSignal::new(x, 8000).unwrap(),
            &mask,
        )
        .unwrap();
        assert!(m.boundary_jump > 0.0);
        assert!(m.gap_lsd_db.unwrap() > 0.0);
    }
}
