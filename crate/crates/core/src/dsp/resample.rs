//! Band-limited rational resampling with a Kaiser-windowed sinc,
//! 64 taps per polyphase branch.

use crate::error::{Error, Result};
use crate::signal::AudioSignal;

/// Half the number of taps per phase.
pub const HALF_TAPS: usize = 32;
const KAISER_BETA: f64 = 8.0;
const ROLLOFF: f64 = 0.95;
/// Above this many phases the taps are computed per output sample instead of tabulated.
const MAX_TABLE_PHASES: u64 = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Taps for fractional position `frac` in [0, 1); tap `k` multiplies input
/// sample `base - HALF_TAPS + 1 + k`. Normalized to unit DC gain.
fn phase_taps(frac: f64, cutoff: f64, i0_beta: f64) -> [f64; 2 * HALF_TAPS] {
    let mut taps = [0.0; 2 * HALF_TAPS];
    let half = HALF_TAPS as f64;
    for (k, tap) in taps.iter_mut().enumerate() {
        let u = frac + half - 1.0 - k as f64;
        let r = u / half;
        let win = if r.abs() <= 1.0 {
            bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
        } else {
            0.0
        };
        *tap = cutoff * sinc(cutoff * u) * win;
    }
    let sum: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= sum;
    }
    taps
}

/// Output length for a `len`-sample input: `round(len * target / source)`.
pub fn resampled_len(len: usize, source_rate: u32, target_rate: u32) -> usize {
    let num = len as u128 * target_rate as u128;
    let den = source_rate as u128;
    ((num + den / 2) / den) as usize
}

/// Filter half-width expressed in samples at the target rate.
pub fn filter_reach(source_rate: u32, target_rate: u32) -> usize {
    if source_rate == target_rate {
        0
    } else {
        (HALF_TAPS as f64 * target_rate as f64 / source_rate as f64).ceil() as usize + 1
    }
}

pub fn resample(x: &AudioSignal, target_rate: u32) -> Result<AudioSignal> {
    if target_rate == 0 {
        return Err(Error::Parameter("target sample rate must be positive".into()));
    }
    let source_rate = x.sample_rate();
    if source_rate == target_rate {
        return Ok(x.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = source_rate as u64 / g;
    let cutoff = ROLLOFF * (target_rate as f64 / source_rate as f64).min(1.0);
    let i0_beta = bessel_i0(KAISER_BETA);

    let table: Option<Vec<[f64; 2 * HALF_TAPS]>> = (up <= MAX_TABLE_PHASES).then(|| {
        (0..up)
            .map(|p| phase_taps(p as f64 / up as f64, cutoff, i0_beta))
            .collect()
    });

    let input = x.samples();
    let len = input.len() as i64;
    let out_len = resampled_len(input.len(), source_rate, target_rate).max(1);
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len as u64 {
        let pos = j * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let computed;
        let taps = match &table {
            Some(t) => &t[phase as usize],
            None => {
                computed = phase_taps(phase as f64 / up as f64, cutoff, i0_beta);
                &computed
            }
        };
        let first = base - HALF_TAPS as i64 + 1;
        let mut acc = 0.0;
        for (k, &tap) in taps.iter().enumerate() {
            let i = first + k as i64;
            if (0..len).contains(&i) {
                acc += tap * input[i as usize];
            }
        }
        out.push(acc);
    }
    AudioSignal::new(out, target_rate)
}
